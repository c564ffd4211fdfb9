//! Voting over overlapping window predictions, the single- and multi-point
//! pipelines, and the aggregation efficacy breakdown.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::ChangePredictor;
use crate::transcript::{ChangeSequence, Conversation};
use crate::windowing::{build_spm_contexts, WindowSet};

/// Votes from every window covering change point `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteSet {
    pub point: usize,
    /// `(window index, change probability)` in window order.
    pub contributions: Vec<(usize, f64)>,
}

impl VoteSet {
    pub fn new(point: usize, contributions: Vec<(usize, f64)>) -> Result<Self> {
        if contributions.is_empty() {
            return Err(Error::validation(format!("change point {point} has no votes")));
        }
        if let Some((_, p)) = contributions.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation(format!("vote probability {p} outside [0,1]")));
        }
        Ok(VoteSet { point, contributions })
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.contributions.iter().map(|&(_, p)| p)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities().sum::<f64>() / self.contributions.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationKind {
    #[default]
    Majority,
    WeightedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationPolicy {
    pub kind: AggregationKind,
    pub threshold: f64,
}

impl Default for AggregationPolicy {
    fn default() -> Self {
        AggregationPolicy {
            kind: AggregationKind::Majority,
            threshold: 0.5,
        }
    }
}

impl AggregationPolicy {
    pub fn new(kind: AggregationKind, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::config(format!("threshold must lie in (0,1), got {threshold}")));
        }
        Ok(AggregationPolicy { kind, threshold })
    }

    pub fn vote(&self, probability: f64) -> bool {
        probability >= self.threshold
    }
}

/// Final decision for one change point.
///
/// Majority: each contribution votes for a change iff its probability reaches
/// the threshold. An exact tie falls back to the mean probability, and a mean
/// sitting exactly on the threshold resolves to "no change".
pub fn aggregate(votes: &VoteSet, policy: &AggregationPolicy) -> Result<bool> {
    if votes.contributions.is_empty() {
        return Err(Error::validation(format!("change point {} has no votes", votes.point)));
    }
    let mean = votes.mean();
    Ok(match policy.kind {
        AggregationKind::WeightedMean => mean >= policy.threshold,
        AggregationKind::Majority => {
            let yes = votes.probabilities().filter(|&p| policy.vote(p)).count();
            let no = votes.contributions.len() - yes;
            match yes.cmp(&no) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => mean > policy.threshold,
            }
        }
    })
}

/// One prediction per change point, thresholded at 0.5.
pub fn run_spm(conv: &Conversation, predictor: &dyn ChangePredictor, h: usize, k: usize) -> Result<ChangeSequence> {
    let policy = AggregationPolicy::default();
    let probabilities = build_spm_contexts(conv, h, k)?
        .iter()
        .map(|ctx| predictor.predict_spm(conv, ctx))
        .collect::<Result<Vec<_>>>()?;
    let decisions = probabilities.iter().map(|&p| policy.vote(p)).collect();
    ChangeSequence::new(decisions).with_probabilities(probabilities)
}

/// Result of the multi-point pipeline for one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct MpmRun {
    /// Aggregated decisions; probabilities are per-point vote means.
    pub changes: ChangeSequence,
    pub votes: Vec<VoteSet>,
}

pub fn run_mpm(
    conv: &Conversation,
    predictor: &dyn ChangePredictor,
    window_len: usize,
    stride: usize,
    policy: &AggregationPolicy,
) -> Result<MpmRun> {
    let ws = WindowSet::new(conv.len(), window_len, stride)?;
    let predictions = ws
        .windows
        .iter()
        .map(|w| predictor.predict_mpm(conv, w))
        .collect::<Result<Vec<_>>>()?;
    let points = conv.len().saturating_sub(1);
    let mut votes = Vec::with_capacity(points);
    for p in 0..points {
        let contributions = ws
            .coverage
            .get(p)
            .expect("point in range")
            .iter()
            .map(|&j| {
                let local = ws.windows[j].local_point(p).expect("covering window");
                (j, predictions[j].probabilities[local])
            })
            .collect();
        votes.push(VoteSet::new(p, contributions)?);
    }
    let decisions = votes
        .iter()
        .map(|v| aggregate(v, policy))
        .collect::<Result<Vec<_>>>()?;
    let means = votes.iter().map(VoteSet::mean).collect();
    Ok(MpmRun {
        changes: ChangeSequence::new(decisions).with_probabilities(means)?,
        votes,
    })
}

/// Breakdown of change points that received at least one wrong window vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EfficacyCounts {
    /// Some votes wrong, aggregate correct.
    pub aggregated_to_correct: usize,
    /// Some but not all votes wrong, aggregate wrong.
    pub aggregated_to_incorrect: usize,
    /// Every vote wrong.
    pub consistently_incorrect: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficacyCategory {
    AggregatedToCorrect,
    AggregatedToIncorrect,
    ConsistentlyIncorrect,
}

impl EfficacyCategory {
    pub const ALL: [EfficacyCategory; 3] = [
        EfficacyCategory::AggregatedToCorrect,
        EfficacyCategory::AggregatedToIncorrect,
        EfficacyCategory::ConsistentlyIncorrect,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EfficacyCategory::AggregatedToCorrect => "Partially Incorrect, Aggregated to Correct",
            EfficacyCategory::AggregatedToIncorrect => "Partially Incorrect, Aggregated to Incorrect",
            EfficacyCategory::ConsistentlyIncorrect => "Consistently Incorrect",
        }
    }
}

/// Category of one change point, or `None` when every vote was right.
pub fn categorize(votes: &VoteSet, gold: bool, policy: &AggregationPolicy) -> Result<Option<EfficacyCategory>> {
    let wrong = votes.probabilities().filter(|&p| policy.vote(p) != gold).count();
    if wrong == 0 {
        return Ok(None);
    }
    if wrong == votes.contributions.len() {
        return Ok(Some(EfficacyCategory::ConsistentlyIncorrect));
    }
    Ok(Some(if aggregate(votes, policy)? == gold {
        EfficacyCategory::AggregatedToCorrect
    } else {
        EfficacyCategory::AggregatedToIncorrect
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EfficacyReport {
    pub counts: EfficacyCounts,
}

impl EfficacyReport {
    pub fn add(&mut self, category: EfficacyCategory) {
        let c = &mut self.counts;
        match category {
            EfficacyCategory::AggregatedToCorrect => c.aggregated_to_correct += 1,
            EfficacyCategory::AggregatedToIncorrect => c.aggregated_to_incorrect += 1,
            EfficacyCategory::ConsistentlyIncorrect => c.consistently_incorrect += 1,
        }
    }

    pub fn merge(&mut self, other: &EfficacyReport) {
        self.counts.aggregated_to_correct += other.counts.aggregated_to_correct;
        self.counts.aggregated_to_incorrect += other.counts.aggregated_to_incorrect;
        self.counts.consistently_incorrect += other.counts.consistently_incorrect;
    }

    pub fn total(&self) -> usize {
        let c = &self.counts;
        c.aggregated_to_correct + c.aggregated_to_incorrect + c.consistently_incorrect
    }

    pub fn count(&self, category: EfficacyCategory) -> usize {
        match category {
            EfficacyCategory::AggregatedToCorrect => self.counts.aggregated_to_correct,
            EfficacyCategory::AggregatedToIncorrect => self.counts.aggregated_to_incorrect,
            EfficacyCategory::ConsistentlyIncorrect => self.counts.consistently_incorrect,
        }
    }

    /// Share of `category` in percent; 0 when no point had a wrong vote.
    pub fn percent(&self, category: EfficacyCategory) -> f64 {
        match self.total() {
            0 => 0.0,
            t => 100.0 * self.count(category) as f64 / t as f64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = EfficacyCategory::ALL
            .iter()
            .map(|&c| {
                serde_json::json!({
                    "category": c,
                    "label": c.label(),
                    "count": self.count(c),
                    "percent": self.percent(c),
                })
            })
            .collect();
        serde_json::json!({ "total": self.total(), "rows": rows })
    }
}

impl fmt::Display for EfficacyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = EfficacyCategory::ALL.iter().map(|c| c.label().len()).max().unwrap_or(0);
        writeln!(f, "{:<width$} | {:>6} | {:>6}", "Types of Prediction", "%", "count")?;
        writeln!(f, "{}-+-{}-+-{}", "-".repeat(width), "-".repeat(6), "-".repeat(6))?;
        for c in EfficacyCategory::ALL {
            writeln!(f, "{:<width$} | {:>6.1} | {:>6}", c.label(), self.percent(c), self.count(c))?;
        }
        Ok(())
    }
}

/// Categorizes every change point with at least one wrong vote.
pub fn efficacy_analysis(votes: &[VoteSet], gold: &ChangeSequence, policy: &AggregationPolicy) -> Result<EfficacyReport> {
    if votes.len() != gold.len() {
        return Err(Error::validation(format!(
            "{} vote sets for {} gold change points",
            votes.len(),
            gold.len()
        )));
    }
    let mut report = EfficacyReport::default();
    for (v, &g) in votes.iter().zip(&gold.decisions) {
        if let Some(c) = categorize(v, g, policy)? {
            report.add(c);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Featurizer, FeaturizerConfig};
    use crate::model::{LinearModel, Mode};
    use crate::predictor::{PredictorHandle, WindowPrediction};
    use crate::transcript::{derive_change_sequence, SpeakerAssignment};
    use crate::windowing::{MpmWindow, SpmContext};
    use proptest::prelude::*;

    fn votes(probs: &[f64]) -> VoteSet {
        VoteSet::new(0, probs.iter().copied().enumerate().collect()).unwrap()
    }

    fn majority() -> AggregationPolicy {
        AggregationPolicy::default()
    }

    fn weighted() -> AggregationPolicy {
        AggregationPolicy::new(AggregationKind::WeightedMean, 0.5).unwrap()
    }

    #[test]
    fn majority_examples() {
        assert!(aggregate(&votes(&[0.9, 0.8, 0.1]), &majority()).unwrap());
        // Tie {1, 0}: mean 0.55 clears the threshold.
        assert!(aggregate(&votes(&[0.9, 0.2]), &majority()).unwrap());
        // Tie with mean exactly on the threshold resolves to no change.
        assert!(!aggregate(&votes(&[0.9, 0.1]), &majority()).unwrap());
    }

    #[test]
    fn weighted_mean_boundary() {
        assert!(aggregate(&votes(&[0.6, 0.4]), &weighted()).unwrap());
        assert!(!aggregate(&votes(&[0.6, 0.3]), &weighted()).unwrap());
    }

    #[test]
    fn empty_votes_rejected() {
        assert!(VoteSet::new(0, vec![]).is_err());
        let raw = VoteSet { point: 0, contributions: vec![] };
        assert!(aggregate(&raw, &majority()).is_err());
        assert!(AggregationPolicy::new(AggregationKind::Majority, 1.0).is_err());
    }

    #[test]
    fn categories_match_hand_cases() {
        let p = majority();
        let v = |bits: &[u8]| votes(&bits.iter().map(|&b| if b == 1 { 0.9 } else { 0.1 }).collect::<Vec<_>>());
        assert_eq!(categorize(&v(&[1, 1, 0]), true, &p).unwrap(), Some(EfficacyCategory::AggregatedToCorrect));
        assert_eq!(categorize(&v(&[0, 0, 0]), true, &p).unwrap(), Some(EfficacyCategory::ConsistentlyIncorrect));
        assert_eq!(categorize(&v(&[0, 0, 1]), true, &p).unwrap(), Some(EfficacyCategory::AggregatedToIncorrect));
        assert_eq!(categorize(&v(&[1, 1, 1]), true, &p).unwrap(), None);
    }

    #[test]
    fn efficacy_length_mismatch() {
        let gold = ChangeSequence::new(vec![true, false]);
        assert!(efficacy_analysis(&[votes(&[0.9])], &gold, &majority()).is_err());
    }

    #[test]
    fn efficacy_table_format() {
        let mut r = EfficacyReport::default();
        r.add(EfficacyCategory::AggregatedToCorrect);
        r.add(EfficacyCategory::ConsistentlyIncorrect);
        let text = r.to_string();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("Partially Incorrect, Aggregated to Correct"));
        assert!(lines[2].contains("50.0"));
        assert!(lines[4].starts_with("Consistently Incorrect"));
    }

    /// Predictor that reports gold changes as 0.9 / 0.1.
    struct Gold(ChangeSequence);

    impl ChangePredictor for Gold {
        fn mode(&self) -> Mode {
            Mode::Mpm
        }
        fn predict_spm(&self, _: &Conversation, ctx: &SpmContext) -> Result<f64> {
            Ok(if self.0.decisions[ctx.change_index] { 0.9 } else { 0.1 })
        }
        fn predict_mpm(&self, _: &Conversation, w: &MpmWindow) -> Result<WindowPrediction> {
            let probs = self.0.decisions[w.span.start..w.span.end - 1]
                .iter()
                .map(|&d| if d { 0.9 } else { 0.1 })
                .collect();
            WindowPrediction::new(w, probs)
        }
    }

    fn labeled(n: usize) -> (Conversation, ChangeSequence) {
        let labels: Vec<&str> = (0..n).map(|i| if (i / 2) % 2 == 0 { "A" } else { "B" }).collect();
        let texts: Vec<String> = (0..n).map(|i| format!("s{i}.")).collect();
        let conv = Conversation::from_texts("c", &texts, None).unwrap();
        (conv, derive_change_sequence(&SpeakerAssignment::from_strs(&labels)))
    }

    #[test]
    fn oracle_runs_reproduce_gold() {
        let (conv, gold) = labeled(11);
        let oracle = Gold(gold.clone());
        assert_eq!(run_spm(&conv, &oracle, 4, 3).unwrap().decisions, gold.decisions);
        let run = run_mpm(&conv, &oracle, 4, 1, &majority()).unwrap();
        assert_eq!(run.changes.decisions, gold.decisions);
        assert!(efficacy_analysis(&run.votes, &gold, &majority()).unwrap().is_empty());
    }

    #[test]
    fn single_sentence_runs_are_empty() {
        let (conv, _) = labeled(1);
        let f = Featurizer::new(FeaturizerConfig { hash_bits: 4 });
        let spm = PredictorHandle::builtin(Mode::Spm, LinearModel::zeros(f)).unwrap();
        assert!(run_spm(&conv, &spm, 4, 3).unwrap().is_empty());
        let mpm = PredictorHandle::builtin(Mode::Mpm, LinearModel::zeros(f)).unwrap();
        assert!(run_mpm(&conv, &mpm, 4, 1, &majority()).unwrap().changes.is_empty());
    }

    #[test]
    fn constant_half_votes_change_everywhere() {
        let (conv, _) = labeled(6);
        let f = Featurizer::new(FeaturizerConfig { hash_bits: 4 });
        let spm = PredictorHandle::builtin(Mode::Spm, LinearModel::zeros(f)).unwrap();
        let r = run_spm(&conv, &spm, 4, 3).unwrap();
        assert!(r.decisions.iter().all(|&d| d));
    }

    #[test]
    fn single_window_equals_thresholded_prediction() {
        let (conv, gold) = labeled(4);
        let oracle = Gold(gold.clone());
        let run = run_mpm(&conv, &oracle, 8, 1, &majority()).unwrap();
        assert!(run.votes.iter().all(|v| v.contributions.len() == 1));
        assert_eq!(run.changes.decisions, gold.decisions);
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut probs in prop::collection::vec(0.0f64..=1.0, 1..8), seed in any::<u64>()) {
            let base_m = aggregate(&votes(&probs), &majority()).unwrap();
            let base_w = aggregate(&votes(&probs), &weighted()).unwrap();
            let len = probs.len();
            probs.rotate_left((seed as usize) % len);
            probs.reverse();
            prop_assert_eq!(aggregate(&votes(&probs), &majority()).unwrap(), base_m);
            prop_assert_eq!(aggregate(&votes(&probs), &weighted()).unwrap(), base_w);
        }

        #[test]
        fn unanimous_votes_win(probs in prop::collection::vec(0.5f64..=1.0, 1..8), low in prop::collection::vec(0.0f64..0.5, 1..8)) {
            for policy in [majority(), weighted()] {
                prop_assert!(aggregate(&votes(&probs), &policy).unwrap());
                prop_assert!(!aggregate(&votes(&low), &policy).unwrap());
            }
        }

        #[test]
        fn weighted_mean_monotone(probs in prop::collection::vec(0.0f64..=1.0, 1..8), idx in 0usize..8, bump in 0.0f64..1.0) {
            let before = aggregate(&votes(&probs), &weighted()).unwrap();
            let mut raised = probs.clone();
            let i = idx % raised.len();
            raised[i] = (raised[i] + bump).min(1.0);
            let after = aggregate(&votes(&raised), &weighted()).unwrap();
            prop_assert!(!(before && !after));
        }
    }
}
