//! Word diarization error rate and its corpus-level summaries.
//!
//! WDER counts evaluated words whose predicted speaker, after the best
//! one-to-one renaming of predicted labels onto reference labels, differs
//! from the reference speaker. WDER-S weights each conversation's WDER by its
//! sentence count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::transcript::{derive_change_sequence, Conversation, SpeakerAssignment};

pub const MAX_MAPPED_LABELS: usize = 12;
pub const DEFAULT_MINUTE_EDGES: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
pub const DEFAULT_SENTENCE_EDGES: [f64; 6] = [0.0, 25.0, 50.0, 100.0, 200.0, 400.0];
pub const TABLE_SPLIT_MINUTES: f64 = 15.0;
pub const TABLE_SPLIT_SENTENCES: f64 = 100.0;

/// Renaming of hypothesis labels onto reference labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMapping {
    /// Hypothesis label to reference label. Hypothesis labels left over when
    /// the hypothesis has more speakers than the reference are absent.
    pub pairs: BTreeMap<String, String>,
    pub mismatches: usize,
}

impl SpeakerMapping {
    pub fn apply(&self, label: &str) -> Option<&str> {
        self.pairs.get(label).map(String::as_str)
    }
}

/// Hypothesis-to-reference renaming minimizing word-level mismatches.
///
/// Labels on both sides are taken in sorted order; among equally good
/// renamings the first in lexicographic permutation order wins.
pub fn optimal_speaker_mapping<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<SpeakerMapping> {
    if reference.len() != hypothesis.len() {
        return Err(Error::validation(format!(
            "{} reference labels vs {} hypothesis labels",
            reference.len(),
            hypothesis.len()
        )));
    }
    let ref_set: Vec<&str> = reference.iter().map(AsRef::as_ref).collect::<BTreeSet<_>>().into_iter().collect();
    let hyp_set: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect::<BTreeSet<_>>().into_iter().collect();
    let k = ref_set.len().max(hyp_set.len());
    if k > MAX_MAPPED_LABELS {
        return Err(Error::validation(format!("{k} speaker labels exceed the limit of {MAX_MAPPED_LABELS}")));
    }
    let mut weights = vec![vec![0i64; k]; k];
    for (r, h) in reference.iter().zip(hypothesis) {
        let ri = ref_set.binary_search(&r.as_ref()).expect("label present");
        let hi = hyp_set.binary_search(&h.as_ref()).expect("label present");
        weights[hi][ri] += 1;
    }
    let assignment = max_weight_assignment(&weights)?;
    let pairs = assignment
        .columns
        .iter()
        .enumerate()
        .filter(|&(h, &r)| h < hyp_set.len() && r < ref_set.len())
        .map(|(h, &r)| (hyp_set[h].to_string(), ref_set[r].to_string()))
        .collect();
    Ok(SpeakerMapping {
        pairs,
        mismatches: reference.len() - assignment.total as usize,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WderResult {
    pub errors: usize,
    pub words: usize,
    pub wder: f64,
    /// Set when there were no words to evaluate; WDER is then reported as 0.
    pub empty: bool,
}

pub fn wder<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<WderResult> {
    let mapping = optimal_speaker_mapping(reference, hypothesis)?;
    let words = reference.len();
    if words == 0 {
        log::warn!("WDER requested over zero words; reporting 0");
    }
    Ok(WderResult {
        errors: mapping.mismatches,
        words,
        wder: if words == 0 { 0.0 } else { mapping.mismatches as f64 / words as f64 },
        empty: words == 0,
    })
}

/// Repeats each sentence label once per word of that sentence.
pub fn word_labels(conv: &Conversation, sentence_labels: &SpeakerAssignment) -> Result<Vec<String>> {
    if sentence_labels.len() != conv.len() {
        return Err(Error::validation(format!(
            "conversation {}: {} labels for {} sentences",
            conv.id,
            sentence_labels.len(),
            conv.len()
        )));
    }
    Ok(conv
        .sentences
        .iter()
        .zip(&sentence_labels.labels)
        .flat_map(|(s, l)| std::iter::repeat_n(l.clone(), s.word_count()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationResult {
    pub id: String,
    pub sentences: usize,
    pub words: usize,
    pub errors: usize,
    pub wder: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minutes: Option<f64>,
}

/// Scores predicted sentence speakers against the gold speakers of `gold`.
pub fn evaluate_conversation(gold: &Conversation, predicted: &SpeakerAssignment) -> Result<ConversationResult> {
    let reference = word_labels(gold, &gold.require_gold()?)?;
    let hypothesis = word_labels(gold, predicted)?;
    let r = wder(&reference, &hypothesis)?;
    Ok(ConversationResult {
        id: gold.id.clone(),
        sentences: gold.len(),
        words: r.words,
        errors: r.errors,
        wder: r.wder,
        minutes: gold.minutes(),
    })
}

/// Sentence-weighted mean of per-conversation WDER.
pub fn wder_s(results: &[ConversationResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::validation("WDER-S of an empty corpus"));
    }
    let weight: usize = results.iter().map(|r| r.sentences).sum();
    let total: f64 = results.iter().map(|r| r.sentences as f64 * r.wder).sum();
    Ok(if weight == 0 { 0.0 } else { total / weight as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub conversations: usize,
    pub sentences: usize,
    pub words: usize,
    pub errors: usize,
    /// Total errors over total words.
    pub pooled_wder: f64,
    /// Unweighted mean of per-conversation WDER.
    pub mean_wder: f64,
    pub wder_s: f64,
}

pub fn summarize(results: &[ConversationResult]) -> Result<CorpusSummary> {
    let wder_s = wder_s(results)?;
    let words: usize = results.iter().map(|r| r.words).sum();
    let errors: usize = results.iter().map(|r| r.errors).sum();
    Ok(CorpusSummary {
        conversations: results.len(),
        sentences: results.iter().map(|r| r.sentences).sum(),
        words,
        errors,
        pooled_wder: if words == 0 { 0.0 } else { errors as f64 / words as f64 },
        mean_wder: results.iter().map(|r| r.wder).sum::<f64>() / results.len() as f64,
        wder_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketMode {
    #[default]
    Minutes,
    Sentences,
}

impl BucketMode {
    pub fn default_edges(self) -> &'static [f64] {
        match self {
            BucketMode::Minutes => &DEFAULT_MINUTE_EDGES,
            BucketMode::Sentences => &DEFAULT_SENTENCE_EDGES,
        }
    }

    pub fn table_split(self) -> f64 {
        match self {
            BucketMode::Minutes => TABLE_SPLIT_MINUTES,
            BucketMode::Sentences => TABLE_SPLIT_SENTENCES,
        }
    }

    fn unit(self) -> &'static str {
        match self {
            BucketMode::Minutes => "min",
            BucketMode::Sentences => "sent",
        }
    }

    fn length(self, r: &ConversationResult) -> Result<f64> {
        match self {
            BucketMode::Sentences => Ok(r.sentences as f64),
            BucketMode::Minutes => r.minutes.ok_or_else(|| {
                Error::validation(format!(
                    "conversation {} has no duration or timestamps; use sentence buckets",
                    r.id
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub mode: BucketMode,
    pub lower: f64,
    /// `None` for the open-ended last bucket.
    pub upper: Option<f64>,
    pub conversation_ids: Vec<String>,
    pub words: usize,
    pub errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled_wder: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wder_s: Option<f64>,
}

impl BucketReport {
    fn from_members(mode: BucketMode, lower: f64, upper: Option<f64>, members: &[&ConversationResult]) -> Self {
        let owned: Vec<ConversationResult> = members.iter().map(|r| (*r).clone()).collect();
        let summary = summarize(&owned).ok();
        BucketReport {
            mode,
            lower,
            upper,
            conversation_ids: members.iter().map(|r| r.id.clone()).collect(),
            words: summary.as_ref().map_or(0, |s| s.words),
            errors: summary.as_ref().map_or(0, |s| s.errors),
            pooled_wder: summary.as_ref().map(|s| s.pooled_wder),
            wder_s: summary.map(|s| s.wder_s),
        }
    }

    pub fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("{}-{}", self.lower, u),
            None => format!("{}+", self.lower),
        }
    }
}

/// Partitions results into `[edges[i], edges[i+1])` plus `[last, ∞)`.
pub fn bucket_report(results: &[ConversationResult], mode: BucketMode, edges: &[f64]) -> Result<Vec<BucketReport>> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("bucket edges must be non-empty and strictly increasing"));
    }
    let lengths = results.iter().map(|r| mode.length(r)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(edges.len());
    for (i, &lower) in edges.iter().enumerate() {
        let upper = edges.get(i + 1).copied();
        let members: Vec<&ConversationResult> = results
            .iter()
            .zip(&lengths)
            .filter(|(_, &len)| {
                let above = if i == 0 { true } else { len >= lower };
                above && upper.is_none_or(|u| len < u)
            })
            .map(|(r, _)| r)
            .collect();
        out.push(BucketReport::from_members(mode, lower, upper, &members));
    }
    Ok(out)
}

/// Short (`≤ split`) and long (`> split`) halves of the corpus.
pub fn split_report(results: &[ConversationResult], mode: BucketMode, split: f64) -> Result<[BucketReport; 2]> {
    let lengths = results.iter().map(|r| mode.length(r)).collect::<Result<Vec<_>>>()?;
    let (mut short, mut long) = (Vec::new(), Vec::new());
    for (r, &len) in results.iter().zip(&lengths) {
        if len <= split {
            short.push(r);
        } else {
            long.push(r);
        }
    }
    Ok([
        BucketReport::from_members(mode, 0.0, Some(split), &short),
        BucketReport::from_members(mode, split, None, &long),
    ])
}

/// One row of the side-by-side comparison table, WDER values as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub system: String,
    pub short_wder: Option<f64>,
    pub short_wder_s: Option<f64>,
    pub long_wder: Option<f64>,
    pub long_wder_s: Option<f64>,
    pub overall_wder: Option<f64>,
    pub overall_wder_s: Option<f64>,
}

impl TableRow {
    pub fn from_results(system: impl Into<String>, results: &[ConversationResult], mode: BucketMode, split: f64) -> Result<Self> {
        let [short, long] = split_report(results, mode, split)?;
        let overall = summarize(results)?;
        Ok(TableRow {
            system: system.into(),
            short_wder: short.pooled_wder,
            short_wder_s: short.wder_s,
            long_wder: long.pooled_wder,
            long_wder_s: long.wder_s,
            overall_wder: Some(overall.pooled_wder),
            overall_wder_s: Some(overall.wder_s),
        })
    }
}

/// Plain-text table with WD / WD-S columns (percent) per length split.
pub fn render_table(rows: &[TableRow], mode: BucketMode, split: f64) -> String {
    let width = rows.iter().map(|r| r.system.len()).max().unwrap_or(0).max(6);
    let unit = mode.unit();
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v));
    let mut out = String::new();
    let short = format!("<= {split} {unit}");
    let long = format!("> {split} {unit}");
    let _ = writeln!(out, "{:<width$} | {:^13} | {:^13} | {:^13}", "System", short, long, "Overall");
    let _ = writeln!(out, "{:<width$} | {:>6} {:>6} | {:>6} {:>6} | {:>6} {:>6}", "", "WD", "WD-S", "WD", "WD-S", "WD", "WD-S");
    let _ = writeln!(out, "{}", "-".repeat(width + 50));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$} | {:>6} {:>6} | {:>6} {:>6} | {:>6} {:>6}",
            r.system,
            pct(r.short_wder),
            pct(r.short_wder_s),
            pct(r.long_wder),
            pct(r.long_wder_s),
            pct(r.overall_wder),
            pct(r.overall_wder_s)
        );
    }
    out
}

/// CSV series of bucket results for plotting.
pub fn bucket_series_csv(buckets: &[BucketReport]) -> String {
    let mut out = String::from("bucket,lower,upper,conversations,words,wder,wder_s\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for b in buckets {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.label(),
            b.lower,
            opt(b.upper),
            b.conversation_ids.len(),
            b.words,
            opt(b.pooled_wder),
            opt(b.wder_s)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSentence {
    pub index: usize,
    pub text: String,
}

/// Sentences around one wrong change decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSlice {
    pub id: String,
    pub change_index: usize,
    pub predicted_change: bool,
    pub gold_change: bool,
    pub sentences: Vec<SliceSentence>,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
}

impl ErrorSlice {
    pub fn render(&self) -> String {
        let mut out = format!("[{} @ {}]\nDialogue:\n", self.id, self.change_index);
        for s in &self.sentences {
            let _ = writeln!(out, "  s_{}: {}", s.index + 1, s.text);
        }
        let _ = writeln!(out, "Model Prediction: [{}]", self.predicted.join(", "));
        let _ = writeln!(out, "Correct Label: [{}]", self.gold.join(", "));
        out
    }
}

/// One slice of `±radius` sentences per wrong change decision. Predicted
/// labels are renamed onto the gold labels first.
pub fn export_errors(conv: &Conversation, predicted: &SpeakerAssignment, radius: usize) -> Result<Vec<ErrorSlice>> {
    let gold = conv.require_gold()?;
    if predicted.len() != gold.len() {
        return Err(Error::validation(format!(
            "conversation {}: {} predicted labels for {} sentences",
            conv.id,
            predicted.len(),
            gold.len()
        )));
    }
    let mapping = optimal_speaker_mapping(&gold.labels, &predicted.labels)?;
    let shown: Vec<String> = predicted
        .labels
        .iter()
        .map(|l| mapping.apply(l).unwrap_or(l).to_string())
        .collect();
    let pred_changes = derive_change_sequence(predicted);
    let gold_changes = derive_change_sequence(&gold);
    let mut out = Vec::new();
    for (p, (&pc, &gc)) in pred_changes.decisions.iter().zip(&gold_changes.decisions).enumerate() {
        if pc == gc {
            continue;
        }
        let start = p.saturating_sub(radius.saturating_sub(1));
        let end = (p + 1 + radius).min(conv.len());
        let range = start..end;
        out.push(ErrorSlice {
            id: conv.id.clone(),
            change_index: p,
            predicted_change: pc,
            gold_change: gc,
            sentences: conv.sentences[range.clone()]
                .iter()
                .map(|s| SliceSentence { index: s.index, text: s.text.clone() })
                .collect(),
            predicted: shown[range.clone()].to_vec(),
            gold: gold.labels[range].to_vec(),
        });
    }
    Ok(out)
}

/// Seeded sample of at most `k` slices, kept in their original order.
pub fn sample_slices(slices: &[ErrorSlice], k: usize, seed: u64) -> Vec<ErrorSlice> {
    if slices.len() <= k {
        return slices.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = (0..slices.len()).collect::<Vec<_>>().choose_multiple(&mut rng, k).copied().collect();
    picked.sort_unstable();
    picked.into_iter().map(|i| slices[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::Sentence;

    fn labels(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    fn result(id: &str, sentences: usize, wder: f64, minutes: Option<f64>) -> ConversationResult {
        ConversationResult {
            id: id.into(),
            sentences,
            words: 10,
            errors: (wder * 10.0).round() as usize,
            wder,
            minutes,
        }
    }

    #[test]
    fn mapping_examples() {
        let m = optimal_speaker_mapping(&labels(&["A", "A", "B", "B"]), &labels(&["B", "B", "A", "A"])).unwrap();
        assert_eq!(m.mismatches, 0);
        assert_eq!(m.apply("B"), Some("A"));
        // Both permutations of {A,B} give 1 mismatch; identity comes first.
        let m = optimal_speaker_mapping(&labels(&["A", "B"]), &labels(&["A", "A"])).unwrap();
        assert_eq!(m.mismatches, 1);
        assert_eq!(m.apply("A"), Some("A"));
        let same = labels(&["X", "Y", "X"]);
        let m = optimal_speaker_mapping(&same, &same).unwrap();
        assert_eq!(m.mismatches, 0);
        assert_eq!(m.apply("Y"), Some("Y"));
        assert!(optimal_speaker_mapping(&labels(&["A"]), &labels(&[])).is_err());
    }

    #[test]
    fn wder_examples() {
        let r = labels(&["A", "A", "A", "A", "A", "B", "B", "B", "B", "B"]);
        let h = labels(&["A", "A", "A", "A", "B", "B", "B", "B", "B", "A"]);
        assert_eq!(wder(&r, &h).unwrap().wder, 0.2);
        assert_eq!(wder(&r, &r).unwrap().wder, 0.0);
        let alternating = labels(&["A", "B", "A", "B", "A", "B"]);
        let constant = labels(&["A"; 6]);
        assert_eq!(wder(&alternating, &constant).unwrap().wder, 0.5);
        let empty: Vec<String> = vec![];
        let e = wder(&empty, &empty).unwrap();
        assert!(e.empty && e.wder == 0.0);
    }

    #[test]
    fn more_hypothesis_speakers_than_reference() {
        let r = labels(&["A", "A", "A", "A"]);
        let h = labels(&["X", "X", "Y", "Z"]);
        let w = wder(&r, &h).unwrap();
        assert_eq!(w.errors, 2);
    }

    #[test]
    fn wder_s_examples() {
        let rs = [result("a", 2, 0.1, None), result("b", 8, 0.3, None)];
        assert!((wder_s(&rs).unwrap() - 0.26).abs() < 1e-12);
        let same = [result("a", 3, 0.4, None), result("b", 9, 0.4, None)];
        assert!((wder_s(&same).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(wder_s(&rs[..1]).unwrap(), 0.1);
        assert!(wder_s(&[]).is_err());
    }

    #[test]
    fn minute_buckets() {
        let rs = [result("a", 5, 0.1, Some(12.0)), result("b", 5, 0.2, Some(3.0)), result("c", 5, 0.3, Some(20.0))];
        let b = bucket_report(&rs, BucketMode::Minutes, &DEFAULT_MINUTE_EDGES).unwrap();
        assert_eq!(b.len(), 7);
        assert_eq!(b[2].conversation_ids, ["a"]);
        assert_eq!(b[0].conversation_ids, ["b"]);
        assert_eq!(b[1].words, 0);
        assert_eq!(b[1].pooled_wder, None);
        let json = serde_json::to_string(&b[1]).unwrap();
        assert!(!json.contains("pooled_wder"));

        let [short, long] = split_report(&rs[1..], BucketMode::Minutes, 15.0).unwrap();
        assert_eq!(short.conversation_ids, ["b"]);
        assert_eq!(long.conversation_ids, ["c"]);
    }

    #[test]
    fn minute_buckets_need_durations() {
        let rs = [result("a", 5, 0.1, None)];
        assert!(bucket_report(&rs, BucketMode::Minutes, &DEFAULT_MINUTE_EDGES).is_err());
        assert!(bucket_report(&rs, BucketMode::Sentences, &DEFAULT_SENTENCE_EDGES).is_ok());
    }

    #[test]
    fn pooled_between_extremes() {
        let rs = [result("a", 2, 0.1, None), result("b", 8, 0.3, None), result("c", 1, 0.0, None)];
        let s = summarize(&rs).unwrap();
        assert!(s.pooled_wder >= 0.0 && s.pooled_wder <= 0.3);
        assert!(s.wder_s >= 0.0 && s.wder_s <= 0.3);
        assert!((s.mean_wder - 0.4 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn table_renders_percentages() {
        let rs = [result("a", 2, 0.1, Some(3.0)), result("b", 8, 0.3, Some(30.0))];
        let row = TableRow::from_results("MPM", &rs, BucketMode::Minutes, 15.0).unwrap();
        let text = render_table(&[row], BucketMode::Minutes, 15.0);
        assert!(text.contains("MPM"));
        assert!(text.contains("10.0"));
        assert!(text.contains("26.0"));
    }

    fn dialogue() -> Conversation {
        let texts = ["Wow.", "What time is it there?", "What time is it?", "It's 3:40."];
        let speakers = ["A", "B", "A", "A"];
        let s = texts
            .iter()
            .zip(speakers)
            .enumerate()
            .map(|(i, (t, sp))| Sentence::new(i, *t).with_speaker(sp))
            .collect();
        Conversation::new("d", s).unwrap()
    }

    #[test]
    fn error_slices() {
        let conv = dialogue();
        let perfect = conv.gold_assignment().unwrap();
        assert!(export_errors(&conv, &perfect, 1).unwrap().is_empty());
        let predicted = SpeakerAssignment::from_strs(&["A", "B", "B", "A"]);
        let slices = export_errors(&conv, &predicted, 1).unwrap();
        // Changes: predicted [1,0,1], gold [1,1,0]: two wrong points.
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].change_index, 1);
        assert_eq!(slices[0].sentences.len(), 2);
        let text = slices[0].render();
        assert!(text.contains("s_2: What time is it there?"));
        assert!(text.contains("Correct Label: [B, A]"));
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let conv = dialogue();
        let slice = export_errors(&conv, &SpeakerAssignment::from_strs(&["A", "B", "B", "A"]), 1).unwrap()[0].clone();
        let many: Vec<ErrorSlice> = (0..200)
            .map(|i| ErrorSlice { change_index: i, ..slice.clone() })
            .collect();
        let a = sample_slices(&many, 50, 7);
        let b = sample_slices(&many, 50, 7);
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        assert_ne!(a, sample_slices(&many, 50, 8));
    }
}
