//! Conversations, sentences, speaker assignments and change sequences.
//!
//! A conversation is an ordered list of sentences. Diarization output is a
//! [`SpeakerAssignment`] (one label per sentence); change detection output is
//! a [`ChangeSequence`] with one binary decision per pair of consecutive
//! sentences. The two views convert into each other for two speakers.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical labels used by the two-speaker pipeline.
pub const SPEAKER_A: &str = "A";
pub const SPEAKER_B: &str = "B";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    #[serde(default)]
    pub speaker: Option<String>,
    #[serde(default)]
    pub start_time: Option<f64>,
    #[serde(default)]
    pub end_time: Option<f64>,
}

impl Sentence {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Sentence {
            index,
            text: text.into(),
            speaker: None,
            start_time: None,
            end_time: None,
        }
    }

    pub fn with_speaker(mut self, speaker: impl Into<String>) -> Self {
        self.speaker = Some(speaker.into());
        self
    }

    pub fn with_times(mut self, start: f64, end: f64) -> Self {
        self.start_time = Some(start);
        self.end_time = Some(end);
        self
    }

    /// Whitespace-delimited words of the sentence.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }

    fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::validation(format!(
                "sentence {} has empty text",
                self.index
            )));
        }
        for t in [self.start_time, self.end_time].into_iter().flatten() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::validation(format!(
                    "sentence {} has invalid timestamp {t}",
                    self.index
                )));
            }
        }
        if let (Some(s), Some(e)) = (self.start_time, self.end_time) {
            if s > e {
                return Err(Error::validation(format!(
                    "sentence {} starts at {s} after it ends at {e}",
                    self.index
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conversation {
    pub id: String,
    pub sentences: Vec<Sentence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Deserialize)]
struct RawConversation {
    id: String,
    sentences: Vec<Sentence>,
    #[serde(default)]
    duration: Option<f64>,
}

impl Conversation {
    /// Builds a conversation, checking every structural invariant.
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Result<Self> {
        let conv = Conversation {
            id: id.into(),
            sentences,
            duration: None,
        };
        conv.validate()?;
        Ok(conv)
    }

    /// Builds a conversation from plain sentence strings with optional labels.
    pub fn from_texts<S: AsRef<str>>(
        id: impl Into<String>,
        texts: &[S],
        speakers: Option<&[S]>,
    ) -> Result<Self> {
        if let Some(sp) = speakers {
            if sp.len() != texts.len() {
                return Err(Error::validation(format!(
                    "{} speakers for {} sentences",
                    sp.len(),
                    texts.len()
                )));
            }
        }
        let sentences = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut s = Sentence::new(i, t.as_ref());
                if let Some(sp) = speakers {
                    s.speaker = Some(sp[i].as_ref().to_string());
                }
                s
            })
            .collect();
        Conversation::new(id, sentences)
    }

    /// Segments raw text with [`segment_sentences`] into an unlabeled conversation.
    pub fn from_raw_text(id: impl Into<String>, raw: &str) -> Result<Self> {
        let texts = segment_sentences(raw)?;
        Conversation::from_texts(id, &texts, None)
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.duration = Some(seconds);
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Sentence::word_count).sum()
    }

    /// Gold speakers, if every sentence carries one.
    pub fn gold_assignment(&self) -> Option<SpeakerAssignment> {
        self.sentences
            .iter()
            .map(|s| s.speaker.clone())
            .collect::<Option<Vec<_>>>()
            .map(SpeakerAssignment::new)
    }

    pub fn require_gold(&self) -> Result<SpeakerAssignment> {
        self.gold_assignment().ok_or_else(|| {
            Error::validation(format!(
                "conversation {} has sentences without speaker labels",
                self.id
            ))
        })
    }

    /// Copy of the conversation with speakers replaced by `assignment`.
    pub fn relabeled(&self, assignment: &SpeakerAssignment) -> Result<Self> {
        if assignment.len() != self.len() {
            return Err(Error::validation(format!(
                "conversation {}: {} labels for {} sentences",
                self.id,
                assignment.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        for (s, l) in out.sentences.iter_mut().zip(&assignment.labels) {
            s.speaker = Some(l.clone());
        }
        Ok(out)
    }

    /// Copy of the conversation with every speaker label removed.
    pub fn unlabeled(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.sentences {
            s.speaker = None;
        }
        out
    }

    /// Length in minutes: explicit duration, else the timestamp extent.
    pub fn minutes(&self) -> Option<f64> {
        if let Some(d) = self.duration {
            return Some(d / 60.0);
        }
        let start = self
            .sentences
            .iter()
            .filter_map(|s| s.start_time)
            .reduce(f64::min)?;
        let end = self
            .sentences
            .iter()
            .filter_map(|s| s.end_time)
            .reduce(f64::max)?;
        Some((end - start).max(0.0) / 60.0)
    }

    fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::validation(format!(
                "conversation {} has no sentences",
                self.id
            )));
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.index != i {
                return Err(Error::validation(format!(
                    "conversation {}: sentence at position {i} has index {}",
                    self.id, s.index
                )));
            }
            s.validate()
                .map_err(|e| Error::validation(format!("conversation {}: {e}", self.id)))?;
        }
        if let Some(d) = self.duration {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::validation(format!(
                    "conversation {} has invalid duration {d}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpeakerAssignment {
    pub labels: Vec<String>,
}

impl SpeakerAssignment {
    pub fn new(labels: Vec<String>) -> Self {
        SpeakerAssignment { labels }
    }

    pub fn from_strs(labels: &[&str]) -> Self {
        SpeakerAssignment::new(labels.iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct labels in sorted order.
    pub fn label_set(&self) -> BTreeSet<&str> {
        self.labels.iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangeSequence {
    pub decisions: Vec<bool>,
    pub probabilities: Option<Vec<f64>>,
}

impl ChangeSequence {
    pub fn new(decisions: Vec<bool>) -> Self {
        ChangeSequence {
            decisions,
            probabilities: None,
        }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::validation(format!(
                    "change decision must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ChangeSequence::new)
    }

    pub fn with_probabilities(mut self, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != self.decisions.len() {
            return Err(Error::validation(format!(
                "{} probabilities for {} decisions",
                probabilities.len(),
                self.decisions.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("probability {p} outside [0,1]")));
        }
        self.probabilities = Some(probabilities);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.decisions.iter().map(|&d| u8::from(d)).collect()
    }

    pub fn change_count(&self) -> usize {
        self.decisions.iter().filter(|&&d| d).count()
    }
}

/// `decisions[i]` is set iff the speaker of sentence `i` differs from `i + 1`.
pub fn derive_change_sequence(assignment: &SpeakerAssignment) -> ChangeSequence {
    ChangeSequence::new(
        assignment
            .labels
            .windows(2)
            .map(|pair| pair[0] != pair[1])
            .collect(),
    )
}

/// Two-speaker decoding: start at `initial`, flip to `other` on every change.
pub fn decode_speakers(changes: &ChangeSequence, initial: &str, other: &str) -> SpeakerAssignment {
    let mut labels = Vec::with_capacity(changes.len() + 1);
    let mut current = initial;
    labels.push(current.to_string());
    for &change in &changes.decisions {
        if change {
            current = if current == initial { other } else { initial };
        }
        labels.push(current.to_string());
    }
    SpeakerAssignment::new(labels)
}

/// [`decode_speakers`] over the canonical `{A, B}` label pair, starting at `A`.
pub fn decode_canonical(changes: &ChangeSequence) -> SpeakerAssignment {
    decode_speakers(changes, SPEAKER_A, SPEAKER_B)
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of input.
///
/// Terminal punctuation stays attached to its sentence. Runs such as `?!` or
/// `...` split once, after the last mark.
pub fn segment_sentences(raw_text: &str) -> Result<Vec<String>> {
    if raw_text.trim().is_empty() {
        return Err(Error::validation("cannot segment empty text"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = raw_text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                push_segment(&mut out, &raw_text[start..end]);
                start = end;
            }
        }
    }
    push_segment(&mut out, &raw_text[start..]);
    Ok(out)
}

fn push_segment(out: &mut Vec<String>, piece: &str) {
    let trimmed = piece.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
}

/// Reads newline-delimited transcript records. Blank lines are skipped.
pub fn parse_transcripts<R: BufRead>(reader: R) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawConversation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let conv = Conversation {
            id: raw.id,
            sentences: raw.sentences,
            duration: raw.duration,
        };
        conv.validate().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line_no}: {m}")),
            other => other,
        })?;
        out.push(conv);
    }
    Ok(out)
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_transcripts(BufReader::new(file))
}

pub fn write_transcripts<W: Write>(mut writer: W, conversations: &[Conversation]) -> std::io::Result<()> {
    for conv in conversations {
        serde_json::to_writer(&mut writer, conv)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_transcripts(path: impl AsRef<Path>, conversations: &[Conversation]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_transcripts(BufWriter::new(file), conversations).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(b: &[u8]) -> ChangeSequence {
        ChangeSequence::from_bits(b).unwrap()
    }

    #[test]
    fn parses_single_record() {
        let line = r#"{"id":"c1","sentences":[{"index":0,"text":"Hi.","speaker":"A","start_time":0.0,"end_time":1.0},{"index":1,"text":"Hello there.","speaker":"A","start_time":null,"end_time":null},{"index":2,"text":"Bye!","speaker":"B"}]}"#;
        let convs = parse_transcripts(line.as_bytes()).unwrap();
        assert_eq!(convs.len(), 1);
        assert_eq!(convs[0].len(), 3);
        assert_eq!(
            convs[0].gold_assignment().unwrap(),
            SpeakerAssignment::from_strs(&["A", "A", "B"])
        );
    }

    #[test]
    fn empty_text_is_validation_error() {
        let line = r#"{"id":"c1","sentences":[{"index":0,"text":"  ","speaker":"A"}]}"#;
        let err = parse_transcripts(line.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn preserves_record_order_and_ignores_unknown_fields() {
        let data = concat!(
            r#"{"id":"z","extra":1,"sentences":[{"index":0,"text":"One.","mood":"ok"}]}"#,
            "\n\n",
            r#"{"id":"a","sentences":[{"index":0,"text":"Two."}]}"#,
            "\n"
        );
        let convs = parse_transcripts(data.as_bytes()).unwrap();
        let ids: Vec<_> = convs.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["z", "a"]);
    }

    #[test]
    fn malformed_record_names_line() {
        let data = "{\"id\":\"a\",\"sentences\":[{\"index\":0,\"text\":\"x\"}]}\n{not json\n";
        match parse_transcripts(data.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_bad_indices_and_times() {
        let s = vec![Sentence::new(1, "x")];
        assert!(Conversation::new("c", s).is_err());
        let s = vec![Sentence::new(0, "x").with_times(2.0, 1.0)];
        assert!(Conversation::new("c", s).is_err());
        assert!(Conversation::new("c", vec![]).is_err());
    }

    #[test]
    fn segmenter_examples() {
        assert_eq!(segment_sentences("Hi. How are you?").unwrap(), ["Hi.", "How are you?"]);
        // The period after "3:40" ends the input; the colon is not terminal.
        assert_eq!(segment_sentences("It's 3:40.").unwrap(), ["It's 3:40."]);
        assert_eq!(segment_sentences("ok").unwrap(), ["ok"]);
        assert_eq!(
            segment_sentences("Wait... what?! Fine").unwrap(),
            ["Wait...", "what?!", "Fine"]
        );
        assert_eq!(segment_sentences("v1.2 is out. ok").unwrap(), ["v1.2 is out.", "ok"]);
        assert!(segment_sentences(" \n\t").is_err());
    }

    #[test]
    fn derive_examples() {
        let a = SpeakerAssignment::from_strs(&["A", "A", "B", "A"]);
        assert_eq!(derive_change_sequence(&a).bits(), [0, 1, 1]);
        let a = SpeakerAssignment::from_strs(&["A"]);
        assert!(derive_change_sequence(&a).is_empty());
        let a = SpeakerAssignment::from_strs(&["A", "B", "A", "B", "A", "A"]);
        assert_eq!(derive_change_sequence(&a).bits(), [1, 1, 1, 1, 0]);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_speakers(&bits(&[0, 1, 1]), "A", "B"),
            SpeakerAssignment::from_strs(&["A", "A", "B", "A"])
        );
        assert_eq!(
            decode_speakers(&bits(&[]), "A", "B"),
            SpeakerAssignment::from_strs(&["A"])
        );
        assert_eq!(
            decode_speakers(&bits(&[1, 1, 1, 1, 0]), "B", "A"),
            SpeakerAssignment::from_strs(&["B", "A", "B", "A", "B", "B"])
        );
    }

    #[test]
    fn minutes_from_duration_or_timestamps() {
        let c = Conversation::new(
            "c",
            vec![
                Sentence::new(0, "a").with_times(10.0, 20.0),
                Sentence::new(1, "b").with_times(30.0, 70.0),
            ],
        )
        .unwrap();
        assert_eq!(c.minutes(), Some(1.0));
        assert_eq!(c.clone().with_duration(720.0).minutes(), Some(12.0));
        let plain = Conversation::from_texts("d", &["x"], None).unwrap();
        assert_eq!(plain.minutes(), None);
    }

    proptest! {
        #[test]
        fn decode_inverts_derive(labels in prop::collection::vec(prop::bool::ANY, 1..50)) {
            let a = SpeakerAssignment::new(
                labels.iter().map(|&b| if b { "A" } else { "B" }.to_string()).collect(),
            );
            let r = derive_change_sequence(&a);
            let first = a.labels[0].clone();
            let other = if first == "A" { "B" } else { "A" };
            prop_assert_eq!(&decode_speakers(&r, &first, other), &a);
            let disagreements = a.labels.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert_eq!(r.change_count(), disagreements);
        }

        #[test]
        fn segmenter_never_loses_text(text in "[a-z .!?]{1,60}") {
            prop_assume!(!text.trim().is_empty());
            let segs = segment_sentences(&text).unwrap();
            prop_assert!(segs.iter().all(|s| !s.is_empty()));
            let joined: String = segs.concat().chars().filter(|c| !c.is_whitespace()).collect();
            let original: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, original);
        }
    }
}
