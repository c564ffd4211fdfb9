//! Parameters of the built-in predictors and their on-disk format.
//!
//! A model file is plain text:
//!
//! ```text
//! TEXTDIAR-MODEL 1
//! {"kind":"mpm","featurizer":{"hash_bits":18},"classes":1,...}
//! <index> <value>
//! ...
//! ```
//!
//! The first line is the magic tag and format version, the second a JSON
//! header, and the rest one line per non-zero weight in index order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Featurizer};

pub const MAGIC: &str = "TEXTDIAR-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Spm,
    Mpm,
    Multispeaker,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Spm => "spm",
            Mode::Mpm => "mpm",
            Mode::Multispeaker => "multispeaker",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spm" => Ok(Mode::Spm),
            "mpm" => Ok(Mode::Mpm),
            "multispeaker" => Ok(Mode::Multispeaker),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic model producing one change probability per feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub featurizer: Featurizer,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(featurizer: Featurizer) -> Self {
        LinearModel {
            weights: vec![0.0; featurizer.dim()],
            featurizer,
        }
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.weights)
    }

    pub fn probability(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.score(x))
    }
}

/// Linear softmax head over `classes` speaker labels. Weights are stored
/// class-major: class `c` occupies `c * dim .. (c + 1) * dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    pub featurizer: Featurizer,
    pub classes: usize,
    pub weights: Vec<f64>,
}

impl SoftmaxModel {
    pub fn zeros(featurizer: Featurizer, classes: usize) -> Self {
        SoftmaxModel {
            weights: vec![0.0; featurizer.dim() * classes],
            featurizer,
            classes,
        }
    }

    pub fn distribution(&self, x: &FeatureVector) -> Vec<f64> {
        softmax_distribution(&self.weights, self.featurizer.dim(), self.classes, x)
    }
}

pub(crate) fn softmax_distribution(weights: &[f64], dim: usize, classes: usize, x: &FeatureVector) -> Vec<f64> {
    let logits: Vec<f64> = (0..classes)
        .map(|c| x.dot(&weights[c * dim..(c + 1) * dim]))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parameters {
    Binary(LinearModel),
    Softmax(SoftmaxModel),
}

impl Parameters {
    pub fn featurizer(&self) -> Featurizer {
        match self {
            Parameters::Binary(m) => m.featurizer,
            Parameters::Softmax(m) => m.featurizer,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Parameters::Binary(m) => &m.weights,
            Parameters::Softmax(m) => &m.weights,
        }
    }

    fn classes(&self) -> usize {
        match self {
            Parameters::Binary(_) => 1,
            Parameters::Softmax(m) => m.classes,
        }
    }
}

/// Training metadata carried in the model header.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub mode: Mode,
    pub params: Parameters,
    pub info: ModelInfo,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: Mode,
    featurizer: Featurizer,
    classes: usize,
    dim: usize,
    nonzero: usize,
    #[serde(default)]
    info: ModelInfo,
}

impl ModelFile {
    pub fn new(mode: Mode, params: Parameters, info: ModelInfo) -> Result<Self> {
        let consistent = matches!(
            (mode, &params),
            (Mode::Spm | Mode::Mpm, Parameters::Binary(_)) | (Mode::Multispeaker, Parameters::Softmax(_))
        );
        if !consistent {
            return Err(Error::config(format!("{mode} model needs matching parameters")));
        }
        Ok(ModelFile { mode, params, info })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let weights = self.params.weights();
        let header = Header {
            kind: self.mode,
            featurizer: self.params.featurizer(),
            classes: self.params.classes(),
            dim: self.params.featurizer().dim(),
            nonzero: weights.iter().filter(|v| **v != 0.0).count(),
            info: self.info.clone(),
        };
        writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for (i, v) in weights.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "{i} {v}")?;
        }
        w.flush()
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("model text is ASCII")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, message: String| Error::Parse { line: line + 1, message };

        let (n, magic) = lines.next().ok_or_else(|| bad(0, "empty model file".into()))?;
        let version = magic
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad(n, format!("missing {MAGIC} header")))?;
        let version: u32 = version
            .parse()
            .map_err(|_| bad(n, format!("bad format version {version:?}")))?;
        if version != FORMAT_VERSION {
            return Err(bad(n, format!("unsupported format version {version}")));
        }

        let (n, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let header: Header = serde_json::from_str(header).map_err(|e| bad(n, e.to_string()))?;
        let dim = header.featurizer.dim();
        if dim != header.dim {
            return Err(bad(n, format!("header dim {} does not match featurizer dim {dim}", header.dim)));
        }
        let classes = header.classes.max(1);
        let mut weights = vec![0.0; dim * classes];
        let mut seen = 0;
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (idx, val) = line
                .split_once(' ')
                .ok_or_else(|| bad(n, format!("malformed weight line {line:?}")))?;
            let idx: usize = idx.parse().map_err(|_| bad(n, format!("bad index {idx:?}")))?;
            let val: f64 = val.parse().map_err(|_| bad(n, format!("bad value {val:?}")))?;
            if idx >= weights.len() || !val.is_finite() {
                return Err(bad(n, format!("weight {idx} = {val} out of range")));
            }
            weights[idx] = val;
            seen += 1;
        }
        if seen != header.nonzero {
            return Err(Error::Parse {
                line: 2,
                message: format!("header declares {} weights, found {seen}", header.nonzero),
            });
        }
        let params = match header.kind {
            Mode::Spm | Mode::Mpm => Parameters::Binary(LinearModel {
                featurizer: header.featurizer,
                weights,
            }),
            Mode::Multispeaker => Parameters::Softmax(SoftmaxModel {
                featurizer: header.featurizer,
                classes,
                weights,
            }),
        };
        ModelFile::new(header.kind, params, header.info)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
