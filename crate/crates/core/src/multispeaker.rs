//! Window-level speaker labeling for more than two speakers.
//!
//! Each window is labeled in its own label space. Consecutive windows are
//! matched on the sentences they share, the matchings are composed so every
//! window speaks window 0's labels, and each sentence then takes the majority
//! label over the windows covering it.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::model::SoftmaxModel;
use crate::predictor::PredictorHandle;
use crate::transcript::{Conversation, SpeakerAssignment};
use crate::windowing::{MpmWindow, WindowSet};

/// Probability-weighted agreement is scaled to integers with this factor.
const PROBABILITY_SCALE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerLabelSet {
    labels: Vec<String>,
}

impl SpeakerLabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::config("a speaker label set needs at least 2 labels"));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::config("speaker labels must be distinct"));
        }
        Ok(SpeakerLabelSet { labels })
    }

    /// `A`, `B`, `C`, ... for `p` speakers.
    pub fn alphabetic(p: usize) -> Result<Self> {
        if p > 26 {
            return Err(Error::config("at most 26 alphabetic speaker labels"));
        }
        Self::new((0..p).map(|i| char::from(b'A' + i as u8).to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowLabeling {
    pub window_index: usize,
    /// Sentence indices the window covers.
    pub span: Range<usize>,
    /// One row per sentence, one column per label.
    pub distributions: Vec<Vec<f64>>,
    /// Argmax label per sentence.
    pub labels: Vec<usize>,
}

impl WindowLabeling {
    pub fn new(window: &MpmWindow, distributions: Vec<Vec<f64>>) -> Result<Self> {
        if distributions.len() != window.len() {
            return Err(Error::validation(format!(
                "window {} covers {} sentences but has {} label rows",
                window.window_index,
                window.len(),
                distributions.len()
            )));
        }
        let p = distributions.first().map_or(0, Vec::len);
        for row in &distributions {
            if row.len() != p || p < 2 {
                return Err(Error::validation("label rows must share a width of at least 2"));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::validation(format!("label row {row:?} is not a distribution")));
            }
        }
        let labels = distributions.iter().map(|row| argmax(row)).collect();
        Ok(WindowLabeling {
            window_index: window.window_index,
            span: window.span.clone(),
            distributions,
            labels,
        })
    }

    /// One-hot labeling from hard labels.
    pub fn from_labels(window: &MpmWindow, labels: &[usize], p: usize) -> Result<Self> {
        let rows = labels
            .iter()
            .map(|&l| {
                if l >= p {
                    return Err(Error::validation(format!("label {l} out of range for {p} speakers")));
                }
                let mut row = vec![0.0; p];
                row[l] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(window, rows)
    }

    pub fn classes(&self) -> usize {
        self.distributions.first().map_or(0, Vec::len)
    }

    fn label_at(&self, sentence: usize) -> usize {
        self.labels[sentence - self.span.start]
    }

    fn row_at(&self, sentence: usize) -> &[f64] {
        &self.distributions[sentence - self.span.start]
    }

    /// Renames labels through `matching`; the partition of sentences into
    /// speakers is unchanged.
    pub fn relabel(&self, matching: &LabelMatching) -> WindowLabeling {
        let distributions = self
            .distributions
            .iter()
            .map(|row| {
                let mut out = vec![0.0; row.len()];
                for (from, v) in row.iter().enumerate() {
                    out[matching.mapping[from]] = *v;
                }
                out
            })
            .collect();
        WindowLabeling {
            window_index: self.window_index,
            span: self.span.clone(),
            distributions,
            labels: self.labels.iter().map(|&l| matching.mapping[l]).collect(),
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Bijection from one window's label space onto another's:
/// `mapping[b_label] = a_label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatching {
    pub mapping: Vec<usize>,
}

impl LabelMatching {
    pub fn identity(p: usize) -> Self {
        LabelMatching { mapping: (0..p).collect() }
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &LabelMatching) -> LabelMatching {
        LabelMatching {
            mapping: inner.mapping.iter().map(|&m| self.mapping[m]).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementMode {
    /// Count overlap sentences by argmax label pairs.
    #[default]
    Argmax,
    /// Sum products of the two windows' label probabilities.
    Probability,
}

/// `counts[a][b]`: agreement between label `a` of window `a` and label `b` of
/// window `b` over the overlap sentences.
pub fn agreement_matrix(a: &WindowLabeling, b: &WindowLabeling, overlap: Range<usize>, mode: AgreementMode) -> Vec<Vec<i64>> {
    let p = a.classes();
    let mut m = vec![vec![0i64; p]; p];
    for s in overlap {
        match mode {
            AgreementMode::Argmax => m[a.label_at(s)][b.label_at(s)] += 1,
            AgreementMode::Probability => {
                let (ra, rb) = (a.row_at(s), b.row_at(s));
                for (i, pa) in ra.iter().enumerate() {
                    for (j, pb) in rb.iter().enumerate() {
                        m[i][j] += (pa * pb * PROBABILITY_SCALE).round() as i64;
                    }
                }
            }
        }
    }
    m
}

/// Optimal mapping of `b`'s labels onto `a`'s over the shared sentences.
pub fn match_labels(a: &WindowLabeling, b: &WindowLabeling, overlap: Range<usize>, mode: AgreementMode) -> Result<LabelMatching> {
    if overlap.is_empty() {
        return Err(Error::config(format!(
            "windows {} and {} share no sentences; reduce the stride",
            a.window_index, b.window_index
        )));
    }
    let inside = |w: &WindowLabeling| w.span.start <= overlap.start && overlap.end <= w.span.end;
    if !inside(a) || !inside(b) {
        return Err(Error::validation("overlap must lie within both windows"));
    }
    if a.classes() != b.classes() {
        return Err(Error::validation("windows use different label counts"));
    }
    let m = agreement_matrix(a, b, overlap, mode);
    let p = m.len();
    // Rows are b's labels, columns a's labels.
    let weights: Vec<Vec<i64>> = (0..p).map(|bl| (0..p).map(|al| m[al][bl]).collect()).collect();
    let assignment = max_weight_assignment(&weights)?;
    Ok(LabelMatching { mapping: assignment.columns })
}

/// Relabels every window into window 0's label space by composing the
/// consecutive-pair matchings left to right.
pub fn unify_labels(ws: &WindowSet, labelings: &[WindowLabeling], mode: AgreementMode) -> Result<Vec<WindowLabeling>> {
    if labelings.len() != ws.len() {
        return Err(Error::validation(format!(
            "{} labelings for {} windows",
            labelings.len(),
            ws.len()
        )));
    }
    let Some(first) = labelings.first() else {
        return Ok(Vec::new());
    };
    let pairwise = labelings
        .windows(2)
        .enumerate()
        .map(|(j, pair)| match_labels(&pair[0], &pair[1], ws.overlap(j, j + 1), mode))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(labelings.len());
    let mut total = LabelMatching::identity(first.classes());
    out.push(first.clone());
    for (labeling, step) in labelings[1..].iter().zip(&pairwise) {
        total = total.compose(step);
        out.push(labeling.relabel(&total));
    }
    Ok(out)
}

/// Majority label per sentence over covering windows. Ties go to the label
/// with the larger summed probability, then to the lower label index.
pub fn aggregate_multispeaker(ws: &WindowSet, unified: &[WindowLabeling], labels: &SpeakerLabelSet) -> Result<SpeakerAssignment> {
    if unified.len() != ws.len() {
        return Err(Error::validation("one labeling per window required"));
    }
    if unified.iter().any(|w| w.classes() != labels.len()) {
        return Err(Error::validation("labeling width differs from the label set"));
    }
    let p = labels.len();
    let mut out = Vec::with_capacity(ws.sentence_count);
    for s in 0..ws.sentence_count {
        let covering = ws.sentence_coverage(s);
        if covering.is_empty() {
            return Err(Error::validation(format!("sentence {s} is not covered by any window")));
        }
        let mut votes = vec![0usize; p];
        let mut mass = vec![0.0f64; p];
        for &j in &covering {
            let w = &unified[j];
            votes[w.label_at(s)] += 1;
            for (l, v) in w.row_at(s).iter().enumerate() {
                mass[l] += v;
            }
        }
        let mut best = 0;
        for l in 1..p {
            let better = votes[l] > votes[best] || (votes[l] == votes[best] && mass[l] > mass[best]);
            if better {
                best = l;
            }
        }
        out.push(labels.label(best).to_string());
    }
    Ok(SpeakerAssignment::new(out))
}

/// Produces a per-sentence label distribution for one window.
pub trait SpeakerLabeler: Send + Sync {
    fn classes(&self) -> usize;
    fn label_window(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowLabeling>;
}

impl SpeakerLabeler for SoftmaxModel {
    fn classes(&self) -> usize {
        self.classes
    }

    fn label_window(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowLabeling> {
        let sentences = window.sentences(conv);
        let rows = (0..sentences.len())
            .map(|i| self.distribution(&self.featurizer.featurize_position(sentences, i)))
            .collect();
        WindowLabeling::new(window, rows)
    }
}

impl SpeakerLabeler for PredictorHandle {
    fn classes(&self) -> usize {
        match self {
            PredictorHandle::Multispeaker(m) => m.classes,
            _ => 0,
        }
    }

    fn label_window(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowLabeling> {
        match self {
            PredictorHandle::Multispeaker(m) => m.label_window(conv, window),
            _ => Err(Error::config("speaker labeling needs a multispeaker model")),
        }
    }
}

/// Full multi-speaker pipeline for one conversation.
pub fn run_multispeaker(
    conv: &Conversation,
    labeler: &dyn SpeakerLabeler,
    window_len: usize,
    stride: usize,
    labels: &SpeakerLabelSet,
    mode: AgreementMode,
) -> Result<SpeakerAssignment> {
    if labeler.classes() != labels.len() {
        return Err(Error::config(format!(
            "labeler predicts {} speakers but {} labels were configured",
            labeler.classes(),
            labels.len()
        )));
    }
    if conv.len() == 1 {
        return Ok(SpeakerAssignment::new(vec![labels.label(0).to_string()]));
    }
    let ws = WindowSet::new(conv.len(), window_len, stride)?;
    let raw = ws
        .windows
        .iter()
        .map(|w| labeler.label_window(conv, w))
        .collect::<Result<Vec<_>>>()?;
    let unified = unify_labels(&ws, &raw, mode)?;
    aggregate_multispeaker(&ws, &unified, labels)
}
