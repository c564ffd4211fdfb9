//! Run configuration: TOML file values, then command-line overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use textdiar_core::features::FeaturizerConfig;
use textdiar_core::metrics::BucketMode;
use textdiar_core::{AggregationPolicy, AgreementMode, Error, Mode, PipelineSettings, RemoteConfig, Result, SynthConfig, TrainConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub window_len: usize,
    pub stride: usize,
    pub h: usize,
    pub k: usize,
    pub speakers: usize,
    pub seed: u64,
    pub jobs: usize,
    pub endpoint: Option<String>,
    pub model: Option<PathBuf>,
    pub aggregation: AggregationPolicy,
    pub agreement: AgreementMode,
    pub train: TrainSection,
    pub oracle: OracleSection,
    pub remote: RemoteSection,
    pub synth: SynthSection,
    pub evaluate: EvaluateSection,
    pub analyze: AnalyzeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineSettings::default();
        RunConfig {
            mode: None,
            window_len: pipeline.window_len,
            stride: pipeline.stride,
            h: pipeline.h,
            k: pipeline.k,
            speakers: pipeline.speakers,
            seed: 0,
            jobs: 1,
            endpoint: None,
            model: None,
            aggregation: AggregationPolicy::default(),
            agreement: AgreementMode::default(),
            train: TrainSection::default(),
            oracle: OracleSection::default(),
            remote: RemoteSection::default(),
            synth: SynthSection::default(),
            evaluate: EvaluateSection::default(),
            analyze: AnalyzeSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: Option<usize>,
    pub hash_bits: u32,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            l2: t.l2,
            batch_size: t.batch_size,
            hash_bits: FeaturizerConfig::default().hash_bits,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Enables the noisy oracle predictor when set.
    pub epsilon: Option<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSection {
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RemoteSection {
    fn default() -> Self {
        let r = RemoteConfig::new("");
        RemoteSection {
            retries: r.retries,
            backoff_ms: r.backoff.as_millis() as u64,
            timeout_ms: r.timeout.as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub conversations: usize,
    pub sentences: usize,
    pub change_prob: f64,
    pub vocab_size: usize,
    pub speakers: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            conversations: 20,
            sentences: s.sentences,
            change_prob: s.change_prob,
            vocab_size: s.vocab_size,
            speakers: s.speakers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BucketChoice {
    /// Minutes when every conversation has timing, sentences otherwise.
    #[default]
    Auto,
    Minutes,
    Sentences,
}

impl BucketChoice {
    pub fn resolve(self, all_timed: bool) -> BucketMode {
        match self {
            BucketChoice::Minutes => BucketMode::Minutes,
            BucketChoice::Sentences => BucketMode::Sentences,
            BucketChoice::Auto if all_timed => BucketMode::Minutes,
            BucketChoice::Auto => BucketMode::Sentences,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub buckets: BucketChoice,
    pub edges: Option<Vec<f64>>,
    pub split: Option<f64>,
    pub system: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    pub radius: usize,
    pub samples: usize,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        AnalyzeSection { radius: 2, samples: 20 }
    }
}

/// Flags shared by every subcommand; set flags win over the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads over conversations.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub window_len: Option<usize>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Base URL of a remote predictor.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(common: &CommonArgs) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = common.seed {
            cfg.seed = v;
        }
        if let Some(v) = common.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = common.mode {
            cfg.mode = Some(v);
        }
        if let Some(v) = common.window_len {
            cfg.window_len = v;
        }
        if let Some(v) = common.stride {
            cfg.stride = v;
        }
        if let Some(v) = &common.endpoint {
            cfg.endpoint = Some(v.clone());
        }
        if cfg.h == 0 {
            return Err(Error::Config("h must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn settings(&self, mode: Mode) -> PipelineSettings {
        PipelineSettings {
            mode,
            h: self.h,
            k: self.k,
            window_len: self.window_len,
            stride: self.stride,
            policy: self.aggregation,
            agreement: self.agreement,
            speakers: self.speakers,
            keep_votes: true,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            l2: self.train.l2,
            batch_size: self.train.batch_size,
            seed: self.seed,
        }
    }

    pub fn remote_config(&self, endpoint: &str) -> RemoteConfig {
        RemoteConfig {
            retries: self.remote.retries,
            backoff: Duration::from_millis(self.remote.backoff_ms),
            timeout: Duration::from_millis(self.remote.timeout_ms),
            ..RemoteConfig::new(endpoint)
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            sentences: self.synth.sentences,
            change_prob: self.synth.change_prob,
            vocab_size: self.synth.vocab_size,
            speakers: self.synth.speakers,
            seed: self.seed,
        }
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.jobs)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use textdiar_core::AggregationKind;

    #[test]
    fn file_values_and_overrides() {
        let text = r#"
            mode = "spm"
            window_len = 6
            seed = 3
            [aggregation]
            kind = "weighted-mean"
            threshold = 0.5
            [oracle]
            epsilon = 0.2
        "#;
        let dir = std::env::temp_dir().join(format!("textdiar-cfg-{}", std::process::id()));
        std::fs::write(&dir, text).unwrap();
        let common = CommonArgs {
            config: Some(dir.clone()),
            window_len: Some(4),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&common).unwrap();
        std::fs::remove_file(&dir).unwrap();
        assert_eq!(cfg.mode, Some(Mode::Spm));
        assert_eq!(cfg.window_len, 4);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.aggregation.kind, AggregationKind::WeightedMean);
        assert_eq!(cfg.oracle.epsilon, Some(0.2));
        assert_eq!(cfg.stride, 1);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = toml::from_str::<RunConfig>("windowlen = 3").unwrap_err();
        assert!(err.to_string().contains("windowlen"));
    }

    #[test]
    fn auto_buckets() {
        assert_eq!(BucketChoice::Auto.resolve(true), BucketMode::Minutes);
        assert_eq!(BucketChoice::Auto.resolve(false), BucketMode::Sentences);
    }
}
