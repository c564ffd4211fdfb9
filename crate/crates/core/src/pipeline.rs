//! Per-conversation prediction and the prediction record format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{run_mpm, run_spm, AggregationPolicy, VoteSet};
use crate::error::{Error, Result};
use crate::model::Mode;
use crate::multispeaker::{run_multispeaker, AgreementMode, SpeakerLabelSet, SpeakerLabeler};
use crate::predictor::ChangePredictor;
use crate::transcript::{decode_canonical, derive_change_sequence, ChangeSequence, Conversation, SpeakerAssignment};

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub decisions: Vec<u8>,
    pub probabilities: Vec<f64>,
    pub speakers: Vec<String>,
    /// Per change point, the `[window, probability]` votes it received.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<Vec<Vec<(usize, f64)>>>,
}

impl PredictionRecord {
    pub fn assignment(&self) -> SpeakerAssignment {
        SpeakerAssignment::new(self.speakers.clone())
    }

    pub fn changes(&self) -> Result<ChangeSequence> {
        ChangeSequence::from_bits(&self.decisions)
    }

    pub fn vote_sets(&self) -> Result<Option<Vec<VoteSet>>> {
        self.votes
            .as_ref()
            .map(|points| {
                points
                    .iter()
                    .enumerate()
                    .map(|(p, c)| VoteSet::new(p, c.clone()))
                    .collect()
            })
            .transpose()
    }

    fn check(&self) -> Result<()> {
        if self.decisions.len() + 1 != self.speakers.len() && !(self.decisions.is_empty() && self.speakers.len() <= 1) {
            return Err(Error::validation(format!(
                "record {}: {} decisions for {} speakers",
                self.id,
                self.decisions.len(),
                self.speakers.len()
            )));
        }
        if !self.probabilities.is_empty() && self.probabilities.len() != self.decisions.len() {
            return Err(Error::validation(format!("record {}: probability count differs from decisions", self.id)));
        }
        if self.votes.as_ref().is_some_and(|v| v.len() != self.decisions.len()) {
            return Err(Error::validation(format!("record {}: vote count differs from decisions", self.id)));
        }
        Ok(())
    }
}

pub fn parse_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        record.check().map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(BufReader::new(file))
}

pub fn write_predictions<W: Write>(mut writer: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions(BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub mode: Mode,
    pub h: usize,
    pub k: usize,
    pub window_len: usize,
    pub stride: usize,
    pub policy: AggregationPolicy,
    pub agreement: AgreementMode,
    pub speakers: usize,
    /// Keep per-point votes in MPM records.
    pub keep_votes: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            mode: Mode::Mpm,
            h: 4,
            k: 3,
            window_len: 8,
            stride: 1,
            policy: AggregationPolicy::default(),
            agreement: AgreementMode::Argmax,
            speakers: 2,
            keep_votes: true,
        }
    }
}

pub enum Engine<'a> {
    Change(&'a dyn ChangePredictor),
    Speakers(&'a dyn SpeakerLabeler),
}

pub fn predict_conversation(conv: &Conversation, engine: &Engine<'_>, settings: &PipelineSettings) -> Result<PredictionRecord> {
    match (settings.mode, engine) {
        (Mode::Spm, Engine::Change(pred)) => {
            let changes = run_spm(conv, *pred, settings.h, settings.k)?;
            Ok(change_record(conv, changes, None))
        }
        (Mode::Mpm, Engine::Change(pred)) => {
            let run = run_mpm(conv, *pred, settings.window_len, settings.stride, &settings.policy)?;
            let votes = settings
                .keep_votes
                .then(|| run.votes.into_iter().map(|v| v.contributions).collect());
            Ok(change_record(conv, run.changes, votes))
        }
        (Mode::Multispeaker, Engine::Speakers(labeler)) => {
            let labels = SpeakerLabelSet::alphabetic(settings.speakers)?;
            let assignment = run_multispeaker(conv, *labeler, settings.window_len, settings.stride, &labels, settings.agreement)?;
            Ok(PredictionRecord {
                id: conv.id.clone(),
                decisions: derive_change_sequence(&assignment).bits(),
                probabilities: Vec::new(),
                speakers: assignment.labels,
                votes: None,
            })
        }
        (mode, _) => Err(Error::config(format!("the configured predictor cannot run in {mode} mode"))),
    }
}

fn change_record(conv: &Conversation, changes: ChangeSequence, votes: Option<Vec<Vec<(usize, f64)>>>) -> PredictionRecord {
    let speakers = if conv.is_empty() {
        Vec::new()
    } else {
        decode_canonical(&changes).labels
    };
    PredictionRecord {
        id: conv.id.clone(),
        decisions: changes.bits(),
        probabilities: changes.probabilities.clone().unwrap_or_default(),
        speakers,
        votes,
    }
}
