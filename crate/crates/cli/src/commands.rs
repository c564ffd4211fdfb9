use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use textdiar_core::alignment::ScoreScheme;
use textdiar_core::features::{Featurizer, FeaturizerConfig};
use textdiar_core::metrics::{
    bucket_report, bucket_series_csv, export_errors, render_table, sample_slices, split_report, BucketMode, TableRow,
};
use textdiar_core::model::{ModelInfo, Parameters};
use textdiar_core::pipeline::{read_predictions, save_predictions};
use textdiar_core::synth::generate_corpus;
use textdiar_core::train::{
    mpm_examples, speaker_examples, spm_examples, train_baseline_mpm, train_baseline_multispeaker, train_baseline_spm,
};
use textdiar_core::transcript::{read_transcripts, save_transcripts};
use textdiar_core::{
    align_conversation, derive_change_sequence, efficacy_analysis, evaluate_conversation, predict_conversation,
    summarize, ChangePredictor, Conversation, ConversationResult, EfficacyReport, Engine, Error, Mode, ModelFile,
    NoisyOracle, PermutingOracle, PipelineSettings, PredictionRecord, PredictorHandle, RemotePredictor, Result,
    SpeakerLabelSet, SpeakerLabeler,
};

use crate::config::{BucketChoice, RunConfig};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct PredictorArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Use the noisy oracle with this flip probability; needs gold speakers.
    #[arg(long)]
    pub oracle_epsilon: Option<f64>,
    /// Fraction of change points the oracle gets wrong in every vote.
    #[arg(long)]
    pub oracle_rho: Option<f64>,
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_align(reference: &Path, hypothesis: &Path, out: &Path) -> Result<()> {
    let refs = read_transcripts(reference)?;
    let hyps = read_transcripts(hypothesis)?;
    let by_id: HashMap<&str, &Conversation> = refs.iter().map(|c| (c.id.as_str(), c)).collect();
    let scheme = ScoreScheme::default();
    let labeled = hyps
        .iter()
        .map(|h| {
            let r = by_id
                .get(h.id.as_str())
                .ok_or_else(|| Error::Validation(format!("hypothesis {} has no reference transcript", h.id)))?;
            align_conversation(r, h, &scheme)
        })
        .collect::<Result<Vec<_>>>()?;
    save_transcripts(out, &labeled)
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let convs = read_transcripts(data)?;
    let mode = cfg.mode.unwrap_or(Mode::Mpm);
    let featurizer = Featurizer::new(FeaturizerConfig { hash_bits: cfg.train.hash_bits });
    let tc = cfg.train_config();
    let mut info = ModelInfo::default();
    let (params, report) = match mode {
        Mode::Spm => {
            info.h = Some(cfg.h);
            info.k = Some(cfg.k);
            let (m, r) = train_baseline_spm(&spm_examples(&convs, cfg.h, cfg.k)?, featurizer, &tc)?;
            (Parameters::Binary(m), r)
        }
        Mode::Mpm => {
            info.window_len = Some(cfg.window_len);
            info.stride = Some(cfg.stride);
            let (m, r) = train_baseline_mpm(&mpm_examples(&convs, cfg.window_len, cfg.stride)?, featurizer, &tc)?;
            (Parameters::Binary(m), r)
        }
        Mode::Multispeaker => {
            let present = convs
                .iter()
                .map(|c| c.require_gold().map(|g| g.label_set().len()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .max()
                .unwrap_or(0);
            if cfg.speakers > present {
                log::warn!(
                    "configured for {} speakers but the training data has at most {present}",
                    cfg.speakers
                );
            }
            let labels = SpeakerLabelSet::alphabetic(cfg.speakers)?;
            info.window_len = Some(cfg.window_len);
            info.stride = Some(cfg.stride);
            info.labels = Some(labels.labels().to_vec());
            let examples = speaker_examples(&convs, cfg.window_len, cfg.stride, cfg.speakers)?;
            let (m, r) = train_baseline_multispeaker(&examples, cfg.speakers, featurizer, &tc)?;
            (Parameters::Softmax(m), r)
        }
    };
    info.final_loss = Some(report.loss);
    ModelFile::new(mode, params, info)?.save(out)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

enum Built {
    Change(Box<dyn ChangePredictor>),
    Speakers(Box<dyn SpeakerLabeler>),
}

impl Built {
    fn engine(&self) -> Engine<'_> {
        match self {
            Built::Change(p) => Engine::Change(p.as_ref()),
            Built::Speakers(l) => Engine::Speakers(l.as_ref()),
        }
    }
}

/// Picks the predictor: oracle, then remote endpoint, then model file.
fn build_predictor(cfg: &RunConfig, args: &PredictorArgs, convs: &[Conversation]) -> Result<(Built, PipelineSettings)> {
    let epsilon = args.oracle_epsilon.or(cfg.oracle.epsilon);
    let model_path = args.model.clone().or_else(|| cfg.model.clone());
    if let Some(eps) = epsilon {
        let mode = cfg.mode.unwrap_or(Mode::Mpm);
        let settings = cfg.settings(mode);
        let built = match mode {
            Mode::Multispeaker => Built::Speakers(Box::new(PermutingOracle::new(convs, cfg.speakers, cfg.seed)?)),
            _ => {
                let rho = args.oracle_rho.unwrap_or(cfg.oracle.rho);
                let oracle = NoisyOracle::new(convs, eps, cfg.seed)?.with_correlated(rho)?.with_mode(mode);
                Built::Change(Box::new(oracle))
            }
        };
        return Ok((built, settings));
    }
    if let Some(endpoint) = &cfg.endpoint {
        let mode = cfg.mode.unwrap_or(Mode::Mpm);
        let remote = RemotePredictor::new(mode, cfg.remote_config(endpoint))?;
        return Ok((Built::Change(Box::new(PredictorHandle::Remote(remote))), cfg.settings(mode)));
    }
    let Some(path) = model_path else {
        return Err(Error::Config("no predictor configured: pass --model, --endpoint or --oracle-epsilon".into()));
    };
    let file = ModelFile::load(&path)?;
    let mode = cfg.mode.unwrap_or(file.mode);
    if mode != file.mode {
        return Err(Error::Config(format!("{} holds a {} model but {mode} mode was requested", path.display(), file.mode)));
    }
    let mut settings = cfg.settings(mode);
    let handle = PredictorHandle::from_model_file(file);
    Ok(match handle {
        PredictorHandle::Multispeaker(m) => {
            settings.speakers = m.classes;
            (Built::Speakers(Box::new(m)), settings)
        }
        other => (Built::Change(Box::new(other)), settings),
    })
}

fn predict_all(cfg: &RunConfig, built: &Built, settings: &PipelineSettings, convs: &[Conversation]) -> Result<Vec<PredictionRecord>> {
    let engine = built.engine();
    let mut records = cfg.thread_pool()?.install(|| {
        convs
            .par_iter()
            .map(|c| predict_conversation(&c.unlabeled(), &engine, settings))
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

pub fn cmd_predict(cfg: &RunConfig, args: &PredictorArgs, input: &Path, out: &Path) -> Result<()> {
    let convs = read_transcripts(input)?;
    let (built, settings) = build_predictor(cfg, args, &convs)?;
    let records = predict_all(cfg, &built, &settings, &convs)?;
    save_predictions(out, &records)
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct EvaluateArgs {
    /// Gold transcripts.
    #[arg(long)]
    pub gold: PathBuf,
    /// Prediction records; omit with --sweep.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Report records (one file per window length with --sweep).
    #[arg(long)]
    pub out: PathBuf,
    /// Plain-text comparison table; printed to stdout when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// CSV series of per-bucket results.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub buckets: Option<BucketChoice>,
    /// Extra table rows, one JSON object per line.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Row name for this run in the table.
    #[arg(long)]
    pub system: Option<String>,
    /// Predict and evaluate once per window length.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<usize>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
}

fn suffixed(path: &Path, window_len: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.L{window_len}.{}", ext.to_string_lossy()),
        None => format!("{stem}.L{window_len}"),
    };
    path.with_file_name(name)
}

fn read_baselines(path: &Path) -> Result<Vec<TableRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(rows)
}

/// Pairs every gold conversation with its prediction record.
fn score(gold: &[Conversation], records: &[PredictionRecord]) -> Result<Vec<ConversationResult>> {
    let by_id: BTreeMap<&str, &PredictionRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    if by_id.len() != records.len() {
        return Err(Error::Validation("duplicate conversation ids among predictions".into()));
    }
    if let Some(extra) = records.iter().find(|r| !gold.iter().any(|g| g.id == r.id)) {
        return Err(Error::Validation(format!("prediction {} has no gold transcript", extra.id)));
    }
    let mut results = gold
        .iter()
        .map(|g| {
            let r = by_id
                .get(g.id.as_str())
                .ok_or_else(|| Error::Validation(format!("no prediction for conversation {}", g.id)))?;
            evaluate_conversation(g, &r.assignment())
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(results)
}

struct ReportOptions<'a> {
    mode: BucketMode,
    edges: Vec<f64>,
    split: f64,
    system: String,
    baselines: &'a [TableRow],
    window_len: Option<usize>,
}

fn write_report(results: &[ConversationResult], opts: &ReportOptions<'_>, out: &Path, table: Option<&Path>, series: Option<&Path>) -> Result<()> {
    let summary = summarize(results)?;
    let buckets = bucket_report(results, opts.mode, &opts.edges)?;
    let [short, long] = split_report(results, opts.mode, opts.split)?;
    let mut lines = vec![json!({
        "type": "run",
        "system": opts.system,
        "bucket_mode": opts.mode,
        "split": opts.split,
        "window_len": opts.window_len,
    })];
    for r in results {
        let mut v = serde_json::to_value(r).expect("serializable");
        v["type"] = json!("conversation");
        lines.push(v);
    }
    for b in &buckets {
        let mut v = serde_json::to_value(b).expect("serializable");
        v["type"] = json!("bucket");
        lines.push(v);
    }
    for (part, b) in [("short", &short), ("long", &long)] {
        let mut v = serde_json::to_value(b).expect("serializable");
        v["type"] = json!("split");
        v["part"] = json!(part);
        lines.push(v);
    }
    let mut v = serde_json::to_value(&summary).expect("serializable");
    v["type"] = json!("corpus");
    lines.push(v);
    write_lines(out, &lines)?;

    let mut rows = opts.baselines.to_vec();
    rows.push(TableRow::from_results(&opts.system, results, opts.mode, opts.split)?);
    let text = render_table(&rows, opts.mode, opts.split);
    match table {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = series {
        write_text(path, &bucket_series_csv(&buckets))?;
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    let gold = read_transcripts(&args.gold)?;
    let all_timed = gold.iter().all(|c| c.minutes().is_some());
    let mode = args.buckets.unwrap_or(cfg.evaluate.buckets).resolve(all_timed);
    let baselines = match &args.baseline {
        Some(p) => read_baselines(p)?,
        None => Vec::new(),
    };
    let system = args
        .system
        .clone()
        .or_else(|| cfg.evaluate.system.clone())
        .unwrap_or_else(|| format!("textdiar {}", cfg.mode.unwrap_or(Mode::Mpm)));
    let mut opts = ReportOptions {
        mode,
        edges: cfg.evaluate.edges.clone().unwrap_or_else(|| mode.default_edges().to_vec()),
        split: cfg.evaluate.split.unwrap_or_else(|| mode.table_split()),
        system,
        baselines: &baselines,
        window_len: None,
    };

    if args.sweep.is_empty() {
        let Some(path) = &args.predictions else {
            return Err(Error::Config("evaluate needs --predictions or --sweep".into()));
        };
        let results = score(&gold, &read_predictions(path)?)?;
        return write_report(&results, &opts, &args.out, args.table.as_deref(), args.series.as_deref());
    }
    if args.predictions.is_some() {
        return Err(Error::Config("--sweep predicts afresh and cannot take --predictions".into()));
    }
    for &len in &args.sweep {
        let mut run = cfg.clone();
        run.window_len = len;
        let (built, settings) = build_predictor(&run, &args.predictor, &gold)?;
        let records = predict_all(&run, &built, &settings, &gold)?;
        let results = score(&gold, &records)?;
        opts.window_len = Some(len);
        let table = args.table.as_deref().map(|p| suffixed(p, len));
        let series = args.series.as_deref().map(|p| suffixed(p, len));
        write_report(&results, &opts, &suffixed(&args.out, len), table.as_deref(), series.as_deref())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// MPM prediction records carrying per-window votes.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Readable dump of the sampled error slices.
    #[arg(long)]
    pub slices: Option<PathBuf>,
    /// Sentences shown on each side of a wrong decision.
    #[arg(long)]
    pub radius: Option<usize>,
    /// Number of error slices to sample.
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn cmd_analyze(cfg: &RunConfig, args: &AnalyzeArgs) -> Result<()> {
    let gold = read_transcripts(&args.gold)?;
    let records = read_predictions(&args.predictions)?;
    let by_id: HashMap<&str, &Conversation> = gold.iter().map(|c| (c.id.as_str(), c)).collect();
    let radius = args.radius.unwrap_or(cfg.analyze.radius);
    let samples = args.samples.unwrap_or(cfg.analyze.samples);

    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut report = EfficacyReport::default();
    let mut slices = Vec::new();
    for r in sorted {
        let conv = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::Validation(format!("prediction {} has no gold transcript", r.id)))?;
        let votes = r.vote_sets()?.ok_or_else(|| {
            Error::Validation(format!("prediction {} carries no window votes; predict in mpm mode", r.id))
        })?;
        let g = derive_change_sequence(&conv.require_gold()?);
        report.merge(&efficacy_analysis(&votes, &g, &cfg.aggregation)?);
        slices.extend(export_errors(conv, &r.assignment(), radius)?);
    }
    let picked = sample_slices(&slices, samples, cfg.seed);

    let mut lines = Vec::with_capacity(picked.len() + 1);
    let mut head = report.to_json();
    head["type"] = json!("efficacy");
    head["error_slices"] = json!(slices.len());
    lines.push(head);
    for s in &picked {
        let mut v = serde_json::to_value(s).expect("serializable");
        v["type"] = json!("slice");
        lines.push(v);
    }
    write_lines(&args.out, &lines)?;
    if let Some(path) = &args.slices {
        let text: Vec<String> = picked.iter().map(|s| s.render()).collect();
        write_text(path, &text.join("\n"))?;
    }
    print!("{report}");
    Ok(())
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub conversations: Option<usize>,
    #[arg(long)]
    pub sentences: Option<usize>,
    #[arg(long)]
    pub change_prob: Option<f64>,
    #[arg(long)]
    pub speakers: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

pub fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<()> {
    let mut synth = cfg.synth_config();
    if let Some(v) = args.sentences {
        synth.sentences = v;
    }
    if let Some(v) = args.change_prob {
        synth.change_prob = v;
    }
    if let Some(v) = args.speakers {
        synth.speakers = v;
    }
    if let Some(v) = args.vocab_size {
        synth.vocab_size = v;
    }
    let count = args.conversations.unwrap_or(cfg.synth.conversations);
    save_transcripts(&args.out, &generate_corpus(&synth, count)?)
}
