//! Word-level alignment of a speaker-annotated reference transcript to an
//! unannotated hypothesis transcript, and transfer of the reference speakers
//! onto the hypothesis sentences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{Conversation, SpeakerAssignment};

/// Lowercases and strips leading/trailing punctuation. Internal apostrophes
/// and other inner characters are kept; the result may be empty.
pub fn normalize_token(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream {
    pub words: Vec<String>,
    pub normalized: Vec<String>,
    /// Sentence index of each word.
    pub sentence: Vec<usize>,
    /// Speaker of each word, when the source sentence has one.
    pub speakers: Vec<Option<String>>,
}

impl TokenStream {
    pub fn from_conversation(conv: &Conversation) -> Self {
        let mut stream = TokenStream {
            words: Vec::new(),
            normalized: Vec::new(),
            sentence: Vec::new(),
            speakers: Vec::new(),
        };
        for s in &conv.sentences {
            for w in s.words() {
                stream.words.push(w.to_string());
                stream.normalized.push(normalize_token(w));
                stream.sentence.push(s.index);
                stream.speakers.push(s.speaker.clone());
            }
        }
        stream
    }

    /// Unlabeled stream over whitespace-separated words, one sentence.
    pub fn from_words(text: &str) -> Self {
        let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        TokenStream {
            normalized: words.iter().map(|w| normalize_token(w)).collect(),
            sentence: vec![0; words.len()],
            speakers: vec![None; words.len()],
            words,
        }
    }

    pub fn with_speakers(mut self, speakers: &[&str]) -> Self {
        self.speakers = speakers.iter().map(|s| Some(s.to_string())).collect();
        self
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn scored(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.normalized[i].is_empty()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum AlignColumn {
    Match { reference: usize, hypothesis: usize },
    Substitution { reference: usize, hypothesis: usize },
    /// Hypothesis word with no reference counterpart (insertion).
    RefGap { hypothesis: usize },
    /// Reference word with no hypothesis counterpart (deletion).
    HypGap { reference: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordAlignment {
    pub columns: Vec<AlignColumn>,
    pub score: i64,
}

impl WordAlignment {
    pub fn count(&self, f: impl Fn(&AlignColumn) -> bool) -> usize {
        self.columns.iter().filter(|c| f(c)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreScheme {
    pub match_score: i64,
    pub substitution: i64,
    pub gap: i64,
    /// Diagonal band half-width; `None` aligns the full matrix.
    pub band: Option<usize>,
}

impl Default for ScoreScheme {
    fn default() -> Self {
        ScoreScheme {
            match_score: 2,
            substitution: -1,
            gap: -1,
            band: None,
        }
    }
}

const DIAG: u8 = 0;
const UP: u8 = 1;
const LEFT: u8 = 2;
const NEG_INF: i64 = i64::MIN / 4;

/// Global alignment maximizing the total score over normalized tokens.
///
/// Ties prefer the diagonal (match or substitution), then a hypothesis gap,
/// then a reference gap. Tokens that normalize to the empty string take no
/// part in scoring; they are emitted as gap columns in stream order so every
/// word still appears exactly once.
pub fn align_words(reference: &TokenStream, hypothesis: &TokenStream, scheme: &ScoreScheme) -> WordAlignment {
    let rs = reference.scored();
    let hs = hypothesis.scored();
    let (n, m) = (rs.len(), hs.len());
    let width = m + 1;
    let (lo, hi) = match scheme.band {
        None => (i64::MIN, i64::MAX),
        Some(b) => {
            let diff = m as i64 - n as i64;
            (diff.min(0) - b as i64, diff.max(0) + b as i64)
        }
    };
    let in_band = |i: usize, j: usize| {
        let d = j as i64 - i as i64;
        lo <= d && d <= hi
    };

    let mut trace = vec![0u8; (n + 1) * width];
    let mut prev = vec![NEG_INF; width];
    let mut cur = vec![NEG_INF; width];
    for j in 0..=m {
        if in_band(0, j) {
            prev[j] = scheme.gap * j as i64;
            trace[j] = LEFT;
        }
    }
    for i in 1..=n {
        cur.fill(NEG_INF);
        if in_band(i, 0) {
            cur[0] = scheme.gap * i as i64;
            trace[i * width] = UP;
        }
        for j in 1..=m {
            if !in_band(i, j) {
                continue;
            }
            let pair = if reference.normalized[rs[i - 1]] == hypothesis.normalized[hs[j - 1]] {
                scheme.match_score
            } else {
                scheme.substitution
            };
            let candidates = [
                (prev[j - 1].saturating_add(pair), DIAG),
                (prev[j].saturating_add(scheme.gap), UP),
                (cur[j - 1].saturating_add(scheme.gap), LEFT),
            ];
            let mut best = candidates[0];
            for c in &candidates[1..] {
                if c.0 > best.0 {
                    best = *c;
                }
            }
            cur[j] = best.0;
            trace[i * width + j] = best.1;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let score = prev[m];

    let mut core = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match trace[i * width + j] {
            DIAG if i > 0 && j > 0 => {
                let (r, h) = (rs[i - 1], hs[j - 1]);
                core.push(if reference.normalized[r] == hypothesis.normalized[h] {
                    AlignColumn::Match { reference: r, hypothesis: h }
                } else {
                    AlignColumn::Substitution { reference: r, hypothesis: h }
                });
                i -= 1;
                j -= 1;
            }
            UP if i > 0 => {
                core.push(AlignColumn::HypGap { reference: rs[i - 1] });
                i -= 1;
            }
            _ => {
                core.push(AlignColumn::RefGap { hypothesis: hs[j - 1] });
                j -= 1;
            }
        }
    }
    core.reverse();

    WordAlignment {
        columns: weave_unscored(core, reference, hypothesis),
        score,
    }
}

/// Inserts tokens excluded from scoring as gap columns at their stream
/// positions.
fn weave_unscored(core: Vec<AlignColumn>, reference: &TokenStream, hypothesis: &TokenStream) -> Vec<AlignColumn> {
    let ref_skip: Vec<usize> = (0..reference.len()).filter(|&i| reference.normalized[i].is_empty()).collect();
    let hyp_skip: Vec<usize> = (0..hypothesis.len()).filter(|&i| hypothesis.normalized[i].is_empty()).collect();
    if ref_skip.is_empty() && hyp_skip.is_empty() {
        return core;
    }
    let mut out = Vec::with_capacity(reference.len() + hypothesis.len());
    let (mut ri, mut hi) = (0, 0);
    let flush = |out: &mut Vec<AlignColumn>, ri: &mut usize, hi: &mut usize, r_lim: usize, h_lim: usize| {
        while *ri < ref_skip.len() && ref_skip[*ri] < r_lim {
            out.push(AlignColumn::HypGap { reference: ref_skip[*ri] });
            *ri += 1;
        }
        while *hi < hyp_skip.len() && hyp_skip[*hi] < h_lim {
            out.push(AlignColumn::RefGap { hypothesis: hyp_skip[*hi] });
            *hi += 1;
        }
    };
    for col in core {
        let (r_lim, h_lim) = match col {
            AlignColumn::Match { reference, hypothesis } | AlignColumn::Substitution { reference, hypothesis } => {
                (reference, hypothesis)
            }
            AlignColumn::RefGap { hypothesis } => (0, hypothesis),
            AlignColumn::HypGap { reference } => (reference, 0),
        };
        flush(&mut out, &mut ri, &mut hi, r_lim, h_lim);
        out.push(col);
    }
    flush(&mut out, &mut ri, &mut hi, usize::MAX, usize::MAX);
    out
}

/// Speaker for every hypothesis word.
///
/// Aligned words (match or substitution) take their reference word's
/// speaker. Inserted words take the speaker of the nearest aligned
/// hypothesis word, the left one on equal distance.
pub fn transfer_speakers(al: &WordAlignment, reference: &TokenStream, hyp_len: usize) -> Result<Vec<String>> {
    let mut labels: Vec<Option<String>> = vec![None; hyp_len];
    for col in &al.columns {
        if let AlignColumn::Match { reference: r, hypothesis: h } | AlignColumn::Substitution { reference: r, hypothesis: h } = *col {
            let speaker = reference.speakers[r]
                .clone()
                .ok_or_else(|| Error::validation(format!("reference word {r} has no speaker")))?;
            labels[h] = Some(speaker);
        }
    }
    let anchors: Vec<usize> = (0..hyp_len).filter(|&h| labels[h].is_some()).collect();
    if anchors.is_empty() {
        if hyp_len == 0 {
            return Ok(Vec::new());
        }
        return Err(Error::validation("no hypothesis word aligns to the reference"));
    }
    let mut out = Vec::with_capacity(hyp_len);
    for h in 0..hyp_len {
        if let Some(l) = &labels[h] {
            out.push(l.clone());
            continue;
        }
        let right_pos = anchors.partition_point(|&a| a < h);
        let left = right_pos.checked_sub(1).map(|i| anchors[i]);
        let right = anchors.get(right_pos).copied();
        let pick = match (left, right) {
            (Some(l), Some(r)) => {
                if h - l <= r - h {
                    l
                } else {
                    r
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("anchors non-empty"),
        };
        out.push(labels[pick].clone().expect("anchor labeled"));
    }
    Ok(out)
}

/// Sentence speakers by majority over each sentence's word labels.
///
/// A tie goes to the previous sentence's label when it is among the tied
/// labels, otherwise to the lexicographically lowest tied label.
pub fn label_sentences(hypothesis: &Conversation, word_labels: &[String]) -> Result<SpeakerAssignment> {
    if word_labels.len() != hypothesis.word_count() {
        return Err(Error::validation(format!(
            "{} word labels for {} hypothesis words",
            word_labels.len(),
            hypothesis.word_count()
        )));
    }
    let fallback = word_labels.iter().min().cloned();
    let mut out: Vec<String> = Vec::with_capacity(hypothesis.len());
    let mut offset = 0;
    for s in &hypothesis.sentences {
        let count = s.word_count();
        let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &word_labels[offset..offset + count] {
            *tally.entry(l.as_str()).or_default() += 1;
        }
        offset += count;
        let previous = out.last().cloned();
        let label = match tally.values().max() {
            None => previous.or_else(|| fallback.clone()).ok_or_else(|| Error::validation("no labels to assign"))?,
            Some(&top) => {
                let tied: Vec<&str> = tally.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l).collect();
                match previous {
                    Some(p) if tied.len() > 1 && tied.contains(&p.as_str()) => p,
                    _ => tied[0].to_string(),
                }
            }
        };
        out.push(label);
    }
    Ok(SpeakerAssignment::new(out))
}

/// Transfers the reference speakers onto the hypothesis conversation.
pub fn align_conversation(reference: &Conversation, hypothesis: &Conversation, scheme: &ScoreScheme) -> Result<Conversation> {
    reference.require_gold()?;
    let rs = TokenStream::from_conversation(reference);
    let hs = TokenStream::from_conversation(hypothesis);
    let al = align_words(&rs, &hs, scheme);
    let words = transfer_speakers(&al, &rs, hs.len())?;
    let assignment = label_sentences(hypothesis, &words)?;
    hypothesis.relabeled(&assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(text: &str) -> TokenStream {
        TokenStream::from_words(text)
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_token("It's"), "it's");
        assert_eq!(normalize_token("Wow."), "wow");
        assert_eq!(normalize_token("—"), "");
        assert_eq!(normalize_token("\"3:40\","), "3:40");
    }

    #[test]
    fn identical_streams_match_everywhere() {
        let s = stream("what time is it there");
        let al = align_words(&s, &s, &ScoreScheme::default());
        assert_eq!(al.score, 10);
        assert!(al.columns.iter().all(|c| matches!(c, AlignColumn::Match { .. })));
    }

    #[test]
    fn insertion_becomes_reference_gap() {
        let al = align_words(&stream("the cat sat"), &stream("the black cat sat"), &ScoreScheme::default());
        assert_eq!(
            al.columns,
            [
                AlignColumn::Match { reference: 0, hypothesis: 0 },
                AlignColumn::RefGap { hypothesis: 1 },
                AlignColumn::Match { reference: 1, hypothesis: 2 },
                AlignColumn::Match { reference: 2, hypothesis: 3 },
            ]
        );
        assert_eq!(al.score, 5);
    }

    #[test]
    fn substitution_beats_two_gaps() {
        let al = align_words(&stream("what time is it"), &stream("what dime is it"), &ScoreScheme::default());
        assert_eq!(al.columns[1], AlignColumn::Substitution { reference: 1, hypothesis: 1 });
        assert_eq!(al.score, 5);
    }

    #[test]
    fn punctuation_tokens_are_woven_in() {
        let r = stream("yes — we did");
        let h = stream("yes we — did it");
        let al = align_words(&r, &h, &ScoreScheme::default());
        assert_eq!(al.score, 2 + 2 + 2 - 1);
        let mut seen_r: Vec<usize> = Vec::new();
        let mut seen_h: Vec<usize> = Vec::new();
        for c in &al.columns {
            match *c {
                AlignColumn::Match { reference, hypothesis } | AlignColumn::Substitution { reference, hypothesis } => {
                    seen_r.push(reference);
                    seen_h.push(hypothesis);
                }
                AlignColumn::HypGap { reference } => seen_r.push(reference),
                AlignColumn::RefGap { hypothesis } => seen_h.push(hypothesis),
            }
        }
        assert_eq!(seen_r, (0..4).collect::<Vec<_>>());
        assert_eq!(seen_h, (0..5).collect::<Vec<_>>());
    }

    #[test]
    fn transfer_rules() {
        let r = stream("a b c").with_speakers(&["A", "A", "A"]);
        let h = stream("a x b c");
        let al = align_words(&r, &h, &ScoreScheme::default());
        assert_eq!(transfer_speakers(&al, &r, h.len()).unwrap(), ["A"; 4]);

        // Insertion at the start falls back to the right neighbor.
        let r = stream("b c").with_speakers(&["B", "B"]);
        let h = stream("um b c");
        let al = align_words(&r, &h, &ScoreScheme::default());
        assert_eq!(transfer_speakers(&al, &r, h.len()).unwrap(), ["B", "B", "B"]);

        // Equidistant insertion takes the left neighbor.
        let r = stream("a b").with_speakers(&["A", "B"]);
        let h = stream("a um b");
        let al = align_words(&r, &h, &ScoreScheme::default());
        assert_eq!(transfer_speakers(&al, &r, h.len()).unwrap(), ["A", "A", "B"]);
    }

    #[test]
    fn sentence_majority_and_ties() {
        let hyp = Conversation::from_texts("h", &["one two three", "four five", "six", "seven eight"], None).unwrap();
        let labels: Vec<String> = ["A", "A", "B", "A", "B", "B", "C", "B"].iter().map(|s| s.to_string()).collect();
        let out = label_sentences(&hyp, &labels).unwrap();
        // [A,A,B] -> A; [A,B] tie after A -> A; [B] -> B; [C,B] tie after B -> B.
        assert_eq!(out.labels, ["A", "A", "B", "B"]);

        let hyp = Conversation::from_texts("h", &["x y"], None).unwrap();
        let out = label_sentences(&hyp, &["B".to_string(), "A".to_string()]).unwrap();
        assert_eq!(out.labels, ["A"]);
    }

    #[test]
    fn conversation_alignment_copies_labels() {
        let reference = Conversation::from_texts("r", &["Hi there.", "Hello, how are you?"], Some(&["A", "B"])).unwrap();
        let out = align_conversation(&reference, &reference.unlabeled(), &ScoreScheme::default()).unwrap();
        assert_eq!(out, reference);
        assert!(align_conversation(&reference.unlabeled(), &reference, &ScoreScheme::default()).is_err());
    }

    #[test]
    fn banded_matches_full_on_near_diagonal_input() {
        let r = stream("so what time is it over there right now");
        let h = stream("so what dime is it there right now ok");
        let full = align_words(&r, &h, &ScoreScheme::default());
        let banded = align_words(&r, &h, &ScoreScheme { band: Some(2), ..Default::default() });
        assert_eq!(full, banded);
    }

    proptest! {
        #[test]
        fn self_alignment_has_no_edits(words in prop::collection::vec("[a-d]{1,2}", 1..20)) {
            let s = stream(&words.join(" "));
            let al = align_words(&s, &s, &ScoreScheme::default());
            let all_match = al.columns.iter().all(|c| matches!(c, AlignColumn::Match { .. }));
            prop_assert!(all_match);
        }

        #[test]
        fn score_symmetric_under_swap(a in prop::collection::vec("[a-c]", 1..8), b in prop::collection::vec("[a-c]", 1..8)) {
            let (x, y) = (stream(&a.join(" ")), stream(&b.join(" ")));
            let s = ScoreScheme::default();
            let xy = align_words(&x, &y, &s);
            let yx = align_words(&y, &x, &s);
            prop_assert_eq!(xy.score, yx.score);
            let ins = |al: &WordAlignment| al.count(|c| matches!(c, AlignColumn::RefGap { .. }));
            let del = |al: &WordAlignment| al.count(|c| matches!(c, AlignColumn::HypGap { .. }));
            prop_assert_eq!(ins(&xy) + del(&xy), ins(&yx) + del(&yx));
        }

        #[test]
        fn transfer_labels_every_word(a in prop::collection::vec("[a-c]", 1..10), b in prop::collection::vec("[a-c]", 1..10)) {
            let speakers: Vec<&str> = (0..a.len()).map(|i| if i % 3 == 0 { "A" } else { "B" }).collect();
            let r = stream(&a.join(" ")).with_speakers(&speakers);
            let h = stream(&b.join(" "));
            let al = align_words(&r, &h, &ScoreScheme::default());
            prop_assume!(al.columns.iter().any(|c| matches!(c, AlignColumn::Match { .. } | AlignColumn::Substitution { .. })));
            let labels = transfer_speakers(&al, &r, h.len()).unwrap();
            prop_assert_eq!(labels.len(), h.len());
        }
    }
}
