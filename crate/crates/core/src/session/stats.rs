use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricKind;

/// Location summary of one metric over a sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Summary of a non-empty slice; `None` when empty.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Summary {
            mean: crate::metrics::mean(values),
            median: median_sorted(&sorted),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Median of an ascending slice; even lengths average the central pair.
pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(median_sorted(&sorted))
}

/// Sequence-level aggregates of an analyzed text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub tokens: usize,
    /// Unicode scalar values in the source text.
    pub characters: usize,
    pub metrics: BTreeMap<MetricKind, Summary>,
    /// `exp` of the mean surprisal over the whole sequence.
    pub perplexity: f64,
    /// Mean natural-log probability of the selected tokens (nats).
    pub mean_log_probability: f64,
}
