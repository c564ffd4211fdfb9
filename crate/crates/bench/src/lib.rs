//! Fixtures shared by the benchmarks.

use textdiar_core::synth::{generate, SynthConfig};
use textdiar_core::Conversation;

pub fn conversation(sentences: usize, speakers: usize, seed: u64) -> Conversation {
    let cfg = SynthConfig {
        sentences,
        speakers,
        seed,
        ..SynthConfig::default()
    };
    generate(&cfg, format!("bench-{seed}")).expect("valid synthetic config")
}

/// Word labels of length `n` over `k` speakers with long runs.
pub fn runs(n: usize, k: usize, seed: u64) -> Vec<String> {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut current = 0;
    (0..n)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if (x >> 33).is_multiple_of(7) {
                current = ((x >> 40) as usize) % k;
            }
            format!("S{current}")
        })
        .collect()
}
