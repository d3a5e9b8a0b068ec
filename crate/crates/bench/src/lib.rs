//! Synthetic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokscope_core::{normalize_logits, AnalysisSession, TokenDistribution, TokenMetrics};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Logits with a handful of strong candidates over a flat background.
pub fn logits(rng: &mut impl Rng, vocab: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..vocab).map(|_| rng.random_range(-4.0..4.0)).collect();
    for _ in 0..8.min(vocab) {
        let i = rng.random_range(0..vocab);
        out[i] += rng.random_range(4.0..12.0);
    }
    out
}

pub fn distribution(rng: &mut impl Rng, vocab: usize) -> TokenDistribution {
    let l = logits(rng, vocab);
    let selected = rng.random_range(0..vocab);
    normalize_logits(l, selected).expect("finite logits")
}

/// Top `k` `(token_id, log_prob)` pairs of a fresh distribution, best first.
pub fn top_k(rng: &mut impl Rng, vocab: usize, k: usize) -> Vec<(u32, f64)> {
    let d = distribution(rng, vocab);
    let mut ranked: Vec<(u32, f64)> = d
        .log_probs()
        .iter()
        .enumerate()
        .map(|(i, &lp)| (i as u32, lp))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(k);
    ranked
}

pub fn session(rng: &mut impl Rng, tokens: usize, vocab: usize) -> AnalysisSession {
    let distributions = (0..tokens)
        .map(|pos| distribution(rng, vocab).with_position(pos))
        .collect();
    let texts = (0..tokens).map(|i| format!(" t{i}")).collect();
    AnalysisSession::build("bench", distributions, texts).expect("valid session")
}

pub fn metric_stream(rng: &mut impl Rng, len: usize) -> Vec<TokenMetrics> {
    (0..len)
        .map(|_| {
            let surprisal: f64 = rng.random_range(0.0..6.0);
            TokenMetrics {
                probability: (-surprisal).exp(),
                surprisal,
                entropy: rng.random_range(0.5..3.0),
                varentropy: rng.random_range(0.5..5.0),
                skewentropy: rng.random_range(-1.0..3.0),
                approximate: false,
            }
        })
        .collect()
}
