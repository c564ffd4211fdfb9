//! Synthetic conversations and noisy oracle predictors.
//!
//! Generated text carries weak signal: each speaker favors its own slice of
//! the vocabulary and sentences before a change tend to end in a question.
//! The oracles draw every flip from a hash of `(seed, conversation, window,
//! boundary)`, so results do not depend on call order or thread count.

use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Mode;
use crate::multispeaker::{SpeakerLabeler, WindowLabeling};
use crate::predictor::{ChangePredictor, WindowPrediction};
use crate::transcript::{derive_change_sequence, ChangeSequence, Conversation, Sentence};
use crate::windowing::{MpmWindow, SpmContext};

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "su", "te", "ra", "no", "vi", "de", "po", "sha", "ru", "ze", "fi", "ga", "mu",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sentences: usize,
    pub change_prob: f64,
    pub vocab_size: usize,
    pub speakers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 40,
            change_prob: 0.3,
            vocab_size: 200,
            speakers: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sentences == 0 {
            return Err(Error::config("synthetic conversations need at least 1 sentence"));
        }
        if !(0.0..=1.0).contains(&self.change_prob) {
            return Err(Error::config(format!("change probability {} outside [0,1]", self.change_prob)));
        }
        if self.speakers == 0 || self.speakers > 26 {
            return Err(Error::config(format!("speaker count {} outside 1..=26", self.speakers)));
        }
        if self.vocab_size < 2 * self.speakers {
            return Err(Error::config(format!(
                "vocabulary of {} words is too small for {} speakers",
                self.vocab_size, self.speakers
            )));
        }
        Ok(())
    }
}

fn word(i: usize) -> String {
    let mut out = String::new();
    let mut x = i;
    loop {
        out.push_str(SYLLABLES[x % SYLLABLES.len()]);
        x /= SYLLABLES.len();
        if x == 0 {
            break;
        }
    }
    out
}

pub fn speaker_name(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

/// One conversation drawn from `config`, identified as `id`.
pub fn generate(config: &SynthConfig, id: impl Into<String>) -> Result<Conversation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.sentences;
    let p = config.speakers;

    let mut speakers = Vec::with_capacity(n);
    speakers.push(rng.gen_range(0..p));
    for _ in 1..n {
        let prev = *speakers.last().expect("non-empty");
        let change = p > 1 && rng.gen_bool(config.change_prob);
        let next = if change {
            let other = rng.gen_range(0..p - 1);
            if other >= prev {
                other + 1
            } else {
                other
            }
        } else {
            prev
        };
        speakers.push(next);
    }

    let slice = config.vocab_size / (p + 1);
    let shared = config.vocab_size - slice * p;
    let mut clock = 0.0;
    let mut sentences = Vec::with_capacity(n);
    for i in 0..n {
        let s = speakers[i];
        let len = rng.gen_range(3..=10);
        let mut words: Vec<String> = (0..len)
            .map(|_| {
                let idx = if rng.gen_bool(0.7) {
                    s * slice + rng.gen_range(0..slice)
                } else {
                    p * slice + rng.gen_range(0..shared)
                };
                word(idx)
            })
            .collect();
        let changes_next = i + 1 < n && speakers[i + 1] != s;
        let question = rng.gen_bool(if changes_next { 0.6 } else { 0.1 });
        words[0][..1].make_ascii_uppercase();
        let mut text = words.join(" ");
        text.push(if question { '?' } else { '.' });
        let duration = 0.35 * len as f64;
        sentences.push(
            Sentence::new(i, text)
                .with_speaker(speaker_name(s))
                .with_times(clock, clock + duration),
        );
        clock += duration + rng.gen_range(0.1..0.8);
    }
    Ok(Conversation::new(id, sentences)?.with_duration(clock))
}

/// `count` conversations; conversation `i` uses seed `config.seed + i`.
pub fn generate_corpus(config: &SynthConfig, count: usize) -> Result<Vec<Conversation>> {
    (0..count)
        .map(|i| {
            let c = SynthConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            generate(&c, format!("synth-{i:05}"))
        })
        .collect()
}

/// Probability that a majority of `votes` independent votes, each wrong with
/// probability `epsilon`, is wrong.
pub fn expected_majority_error(epsilon: f64, votes: usize) -> Result<f64> {
    if votes.is_multiple_of(2) {
        return Err(Error::validation(format!("vote count must be odd, got {votes}")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::validation(format!("error rate {epsilon} outside [0,1]")));
    }
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=votes {
        if j > 0 {
            binom = binom * (votes - j + 1) as f64 / j as f64;
        }
        if 2 * j > votes {
            total += binom * epsilon.powi(j as i32) * (1.0 - epsilon).powi((votes - j) as i32);
        }
    }
    Ok(total)
}

fn unit_draw(seed: u64, conv: &str, tag: &str, a: usize, b: usize) -> f64 {
    let mut h = FnvHasher::default();
    h.write_u64(seed);
    h.write(conv.as_bytes());
    h.write_u8(0);
    h.write(tag.as_bytes());
    h.write_u64(a as u64);
    h.write_u64(b as u64);
    ChaCha8Rng::seed_from_u64(h.finish()).gen::<f64>()
}

/// Oracle emitting 0.9 for a gold change and 0.1 otherwise, with each vote
/// flipped with probability `epsilon`. A fraction `rho` of change points is
/// wrong in every vote.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    gold: HashMap<String, ChangeSequence>,
    pub epsilon: f64,
    pub rho: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl NoisyOracle {
    pub fn new(conversations: &[Conversation], epsilon: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::config(format!("oracle flip probability {epsilon} outside [0, 0.5)")));
        }
        let gold = conversations
            .iter()
            .map(|c| Ok((c.id.clone(), derive_change_sequence(&c.require_gold()?))))
            .collect::<Result<_>>()?;
        Ok(NoisyOracle {
            gold,
            epsilon,
            rho: 0.0,
            seed,
            mode: Mode::Mpm,
        })
    }

    pub fn with_correlated(mut self, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::config(format!("correlated fraction {rho} outside [0,1]")));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Whether point `p` of `conv` is wrong in every vote.
    pub fn is_consistent_error(&self, conv: &str, p: usize) -> bool {
        self.rho > 0.0 && unit_draw(self.seed, conv, "rho", p, 0) < self.rho
    }

    fn gold_for(&self, conv: &Conversation) -> Result<&ChangeSequence> {
        let g = self
            .gold
            .get(&conv.id)
            .ok_or_else(|| Error::validation(format!("oracle has no gold for conversation {}", conv.id)))?;
        if g.len() + 1 != conv.len() {
            return Err(Error::validation(format!("oracle gold for {} has the wrong length", conv.id)));
        }
        Ok(g)
    }

    fn vote(&self, gold: bool, conv: &str, tag: &str, window: usize, p: usize) -> f64 {
        let flipped = self.is_consistent_error(conv, p) || unit_draw(self.seed, conv, tag, window, p) < self.epsilon;
        if gold != flipped {
            0.9
        } else {
            0.1
        }
    }
}

impl ChangePredictor for NoisyOracle {
    fn mode(&self) -> Mode {
        self.mode
    }

    fn predict_spm(&self, conv: &Conversation, ctx: &SpmContext) -> Result<f64> {
        let g = self.gold_for(conv)?;
        let p = ctx.change_index;
        Ok(self.vote(g.decisions[p], &conv.id, "spm", 0, p))
    }

    fn predict_mpm(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowPrediction> {
        let g = self.gold_for(conv)?;
        let probs = (window.span.start..window.span.end - 1)
            .map(|p| self.vote(g.decisions[p], &conv.id, "mpm", window.window_index, p))
            .collect();
        WindowPrediction::new(window, probs)
    }
}

/// Labeler returning gold speakers under a fresh random label permutation in
/// every window.
#[derive(Debug, Clone)]
pub struct PermutingOracle {
    gold: HashMap<String, Vec<usize>>,
    classes: usize,
    pub seed: u64,
}

impl PermutingOracle {
    /// Gold speakers are numbered by first appearance in each conversation.
    pub fn new(conversations: &[Conversation], classes: usize, seed: u64) -> Result<Self> {
        let mut gold = HashMap::new();
        for c in conversations {
            let labels = c.require_gold()?.labels;
            let mut seen: Vec<&str> = Vec::new();
            let mut ids = Vec::with_capacity(labels.len());
            for l in &labels {
                let i = match seen.iter().position(|s| s == l) {
                    Some(i) => i,
                    None => {
                        seen.push(l);
                        seen.len() - 1
                    }
                };
                ids.push(i);
            }
            if seen.len() > classes {
                return Err(Error::validation(format!(
                    "conversation {} has {} speakers, more than {classes}",
                    c.id,
                    seen.len()
                )));
            }
            gold.insert(c.id.clone(), ids);
        }
        Ok(PermutingOracle { gold, classes, seed })
    }
}

impl SpeakerLabeler for PermutingOracle {
    fn classes(&self) -> usize {
        self.classes
    }

    fn label_window(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowLabeling> {
        let gold = self
            .gold
            .get(&conv.id)
            .ok_or_else(|| Error::validation(format!("oracle has no gold for conversation {}", conv.id)))?;
        let mut perm: Vec<usize> = (0..self.classes).collect();
        let mut h = FnvHasher::default();
        h.write_u64(self.seed);
        h.write(conv.id.as_bytes());
        h.write_u64(window.window_index as u64);
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(h.finish()));
        let labels: Vec<usize> = gold[window.span.clone()].iter().map(|&g| perm[g]).collect();
        WindowLabeling::from_labels(window, &labels, self.classes)
    }
}
