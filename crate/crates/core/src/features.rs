//! Lexical features for a sentence pair inside its context.
//!
//! The vector is laid out as a small block of dense features followed by
//! `2^hash_bits` signed hash buckets for word unigrams and bigrams.

use std::collections::BTreeSet;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::transcript::Sentence;

pub const BIAS: usize = 0;
pub const LEFT_TOKENS: usize = 1;
pub const RIGHT_TOKENS: usize = 2;
pub const LEFT_CHARS: usize = 3;
pub const RIGHT_CHARS: usize = 4;
pub const LEFT_QUESTION: usize = 5;
pub const RIGHT_QUESTION: usize = 6;
pub const LEFT_EXCLAIM: usize = 7;
pub const RIGHT_EXCLAIM: usize = 8;
pub const OVERLAP: usize = 9;
/// Left sentence is a question and the right one is not.
pub const QUESTION_ANSWER: usize = 10;
pub const CONTEXT_SIZE: usize = 11;
pub const BOUNDARY_POSITION: usize = 12;
pub const DENSE_FEATURES: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub hash_bits: u32,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { hash_bits: 18 }
    }
}

/// Sparse representation of a fixed-dimension vector; indices are sorted and
/// unique.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    fn from_unsorted(dim: usize, mut raw: Vec<(u32, f64)>) -> Self {
        raw.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
        for (i, v) in raw {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        FeatureVector { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(index as u32), |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| weights[i as usize] * v)
            .sum()
    }

    /// `target += scale * self`
    pub fn add_scaled_to(&self, target: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            target[i as usize] += scale * v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_scaled_to(&mut out, 1.0);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Featurizer {
    pub config: FeaturizerConfig,
}

impl Featurizer {
    pub fn new(config: FeaturizerConfig) -> Self {
        Featurizer { config }
    }

    pub fn buckets(&self) -> usize {
        1 << self.config.hash_bits
    }

    pub fn dim(&self) -> usize {
        DENSE_FEATURES + self.buckets()
    }

    /// Features for the boundary between `left` and `right`. The boundary's
    /// position is located in `context` by sentence index.
    pub fn featurize(&self, left: &Sentence, right: &Sentence, context: &[Sentence]) -> FeatureVector {
        let left_tokens = tokens(&left.text);
        let right_tokens = tokens(&right.text);
        let mut raw = Vec::with_capacity(4 * (left_tokens.len() + right_tokens.len()) + DENSE_FEATURES);

        let left_q = ends_with(&left.text, '?');
        let right_q = ends_with(&right.text, '?');
        let dense = [
            (BIAS, 1.0),
            (LEFT_TOKENS, (left_tokens.len() as f64).ln_1p()),
            (RIGHT_TOKENS, (right_tokens.len() as f64).ln_1p()),
            (LEFT_CHARS, (left.text.chars().count() as f64).ln_1p()),
            (RIGHT_CHARS, (right.text.chars().count() as f64).ln_1p()),
            (LEFT_QUESTION, indicator(left_q)),
            (RIGHT_QUESTION, indicator(right_q)),
            (LEFT_EXCLAIM, indicator(ends_with(&left.text, '!'))),
            (RIGHT_EXCLAIM, indicator(ends_with(&right.text, '!'))),
            (OVERLAP, jaccard(&left_tokens, &right_tokens)),
            (QUESTION_ANSWER, indicator(left_q && !right_q)),
            (CONTEXT_SIZE, (context.len() as f64).ln_1p()),
            (BOUNDARY_POSITION, boundary_position(left, context)),
        ];
        raw.extend(dense.iter().map(|&(i, v)| (i as u32, v)));

        self.hash_ngrams(&mut raw, "l", &left_tokens);
        self.hash_ngrams(&mut raw, "r", &right_tokens);
        if let (Some(last), Some(first)) = (left_tokens.last(), right_tokens.first()) {
            raw.push(self.hashed("x", &[last, first]));
        }
        if let Some(first) = right_tokens.first() {
            raw.push(self.hashed("rf", &[first]));
        }
        FeatureVector::from_unsorted(self.dim(), raw)
    }

    /// Features for sentence `position` of `window`, used by the per-sentence
    /// speaker head. The sentence is paired with its predecessor (or itself
    /// at the window start) and tagged with its position.
    pub fn featurize_position(&self, window: &[Sentence], position: usize) -> FeatureVector {
        let prev = &window[position.saturating_sub(1)];
        let base = self.featurize(prev, &window[position], window);
        let mut raw = base.entries;
        let pos = position.to_string();
        raw.push(self.hashed("pos", &[pos.as_str()]));
        if position == 0 {
            raw.push(self.hashed::<&str>("start", &[]));
        }
        FeatureVector::from_unsorted(self.dim(), raw)
    }

    fn hash_ngrams(&self, raw: &mut Vec<(u32, f64)>, side: &str, toks: &[String]) {
        for t in toks {
            raw.push(self.hashed(side, &[t]));
        }
        let bigram_ns = format!("{side}2");
        for pair in toks.windows(2) {
            raw.push(self.hashed(&bigram_ns, &[&pair[0], &pair[1]]));
        }
    }

    fn hashed<S: AsRef<str>>(&self, namespace: &str, parts: &[S]) -> (u32, f64) {
        let mut hasher = FnvHasher::default();
        hasher.write(namespace.as_bytes());
        for p in parts {
            hasher.write_u8(0x1f);
            hasher.write(p.as_ref().as_bytes());
        }
        let h = hasher.finish();
        let bucket = (h & (self.buckets() as u64 - 1)) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((DENSE_FEATURES + bucket) as u32, sign)
    }
}

/// Lowercased words with surrounding punctuation removed; empty words dropped.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Jaccard similarity of the two token sets; two empty sets count as identical.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let a: BTreeSet<&str> = a.iter().map(String::as_str).collect();
    let b: BTreeSet<&str> = b.iter().map(String::as_str).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

fn ends_with(text: &str, mark: char) -> bool {
    text.trim_end().ends_with(mark)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn boundary_position(left: &Sentence, context: &[Sentence]) -> f64 {
    match context.iter().position(|s| s.index == left.index) {
        Some(pos) if context.len() > 1 => (pos as f64 + 0.5) / context.len() as f64,
        _ => 0.5,
    }
}
