use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use super::{
    centered_moments, entropy_of, token_probability, token_surprisal, MetricKind, Shape,
    TokenDistribution,
};

const KINDS: usize = MetricKind::ALL.len();

/// Per-sequence store of metric vectors, each filled on first read.
///
/// A slot is computed at most once even under concurrent first reads; every
/// reader gets the same shared vector.
#[derive(Debug, Default)]
pub struct MetricCache {
    slots: [OnceLock<Arc<[f64]>>; KINDS],
    computed: [AtomicUsize; KINDS],
}

impl MetricCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Per-position values of `kind` over `distributions`.
    ///
    /// The cache is bound to one sequence: callers must pass the same
    /// distributions on every read.
    pub fn get(&self, kind: MetricKind, distributions: &[TokenDistribution]) -> Arc<[f64]> {
        self.slots[kind.index()]
            .get_or_init(|| {
                self.computed[kind.index()].fetch_add(1, Ordering::Relaxed);
                self.compute(kind, distributions)
            })
            .clone()
    }

    /// Stored vector for `kind`, without computing it.
    pub fn peek(&self, kind: MetricKind) -> Option<Arc<[f64]>> {
        self.slots[kind.index()].get().cloned()
    }

    /// Number of times `kind` has been evaluated.
    pub fn compute_count(&self, kind: MetricKind) -> usize {
        self.computed[kind.index()].load(Ordering::Relaxed)
    }

    fn compute(&self, kind: MetricKind, dists: &[TokenDistribution]) -> Arc<[f64]> {
        match kind {
            MetricKind::Probability => dists.iter().map(token_probability).collect(),
            MetricKind::Surprisal => dists.iter().map(token_surprisal).collect(),
            MetricKind::Entropy => dists.iter().map(|d| entropy_of(d.log_probs())).collect(),
            MetricKind::Varentropy => dists
                .iter()
                .map(|d| {
                    let lp = d.log_probs();
                    centered_moments(lp, entropy_of(lp)).0
                })
                .collect(),
            MetricKind::Skewentropy => dists
                .iter()
                .map(|d| Shape::of(d.log_probs()).skewentropy)
                .collect(),
            MetricKind::Perplexity => {
                let surprisal = self.get(MetricKind::Surprisal, dists);
                let mut running = 0.0;
                surprisal
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        running += s;
                        (running / (i + 1) as f64).exp()
                    })
                    .collect()
            }
        }
    }
}
