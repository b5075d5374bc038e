//! Shared inputs for the criterion benches.

use corelink_core::synth::{random_document, RandomDocParams};
use corelink_core::Document;
use rand::rngs::StdRng;
use rand::SeedableRng;

/// `n` random documents of roughly `tokens` tokens each.
pub fn corpus(n: usize, tokens: usize, seed: u64) -> Vec<Document> {
    let mut rng = StdRng::seed_from_u64(seed);
    let params = RandomDocParams {
        max_sentences: (tokens / 12).max(1),
        max_tokens: tokens,
        max_chains: (tokens / 10).max(1),
    };
    (0..n)
        .map(|i| random_document(&mut rng, &format!("bench-{i}"), &params))
        .collect()
}
