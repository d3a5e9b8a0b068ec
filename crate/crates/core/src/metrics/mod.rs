//! Information metrics over a single token position.
//!
//! Everything works from natural-log probabilities: surprisal, entropy and
//! perplexity are in nats, varentropy in nats². Terms whose probability
//! underflows to zero contribute nothing (`0 · ln 0 = 0`).

mod cache;
mod distribution;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use distribution::CompensatedSum;

pub use cache::MetricCache;
pub use distribution::{
    log_softmax, logsumexp, normalize_logits, Coverage, TokenDistribution, TokenIds, MAX_LOG_PROB,
    NORMALIZATION_TOLERANCE, TAIL_TOKEN_ID,
};

/// Below this varentropy (nats²) skewentropy is reported as 0.
pub const VARIANCE_EPSILON: f64 = 1e-12;

/// The six per-position metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Probability,
    Surprisal,
    Entropy,
    Varentropy,
    Skewentropy,
    /// Running perplexity: `exp` of the mean surprisal up to and including
    /// the position. The last entry is the sequence perplexity.
    Perplexity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Probability,
        MetricKind::Surprisal,
        MetricKind::Entropy,
        MetricKind::Varentropy,
        MetricKind::Skewentropy,
        MetricKind::Perplexity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Probability => "probability",
            MetricKind::Surprisal => "surprisal",
            MetricKind::Entropy => "entropy",
            MetricKind::Varentropy => "varentropy",
            MetricKind::Skewentropy => "skewentropy",
            MetricKind::Perplexity => "perplexity",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Metric values at one token position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenMetrics {
    pub probability: f64,
    pub surprisal: f64,
    pub entropy: f64,
    pub varentropy: f64,
    pub skewentropy: f64,
    /// Set when the source distribution was a lumped top-k view.
    pub approximate: bool,
}

impl TokenMetrics {
    pub fn compute(d: &TokenDistribution) -> Self {
        let shape = Shape::of(d.log_probs());
        TokenMetrics {
            probability: token_probability(d),
            surprisal: token_surprisal(d),
            entropy: shape.entropy,
            varentropy: shape.varentropy,
            skewentropy: shape.skewentropy,
            approximate: d.is_approximate(),
        }
    }

    /// Value of a per-token metric. Perplexity of a single token is `exp(I)`.
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Probability => self.probability,
            MetricKind::Surprisal => self.surprisal,
            MetricKind::Entropy => self.entropy,
            MetricKind::Varentropy => self.varentropy,
            MetricKind::Skewentropy => self.skewentropy,
            MetricKind::Perplexity => self.surprisal.exp(),
        }
    }
}

/// Probability assigned to the selected token.
pub fn token_probability(d: &TokenDistribution) -> f64 {
    d.selected_log_prob().exp().min(1.0)
}

/// Surprisal of the selected token, read straight from log space.
pub fn token_surprisal(d: &TokenDistribution) -> f64 {
    (-d.selected_log_prob()).max(0.0)
}

pub fn distribution_entropy(d: &TokenDistribution) -> f64 {
    entropy_of(d.log_probs())
}

pub fn distribution_varentropy(d: &TokenDistribution) -> f64 {
    let lp = d.log_probs();
    centered_moments(lp, entropy_of(lp)).0
}

pub fn distribution_skewentropy(d: &TokenDistribution) -> f64 {
    Shape::of(d.log_probs()).skewentropy
}

/// `exp` of the mean surprisal.
pub fn sequence_perplexity(surprisals: &[f64]) -> Result<f64> {
    if surprisals.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(mean(surprisals).exp())
}

/// Entropy, varentropy and skewentropy of one distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Shape {
    pub entropy: f64,
    pub varentropy: f64,
    pub skewentropy: f64,
}

impl Shape {
    pub fn of(log_probs: &[f64]) -> Self {
        let entropy = entropy_of(log_probs);
        let (varentropy, third) = centered_moments(log_probs, entropy);
        let skewentropy = if varentropy < VARIANCE_EPSILON {
            0.0
        } else {
            third / varentropy.powf(1.5)
        };
        Shape {
            entropy,
            varentropy,
            skewentropy,
        }
    }
}

fn entropy_of(log_probs: &[f64]) -> f64 {
    let mut h = CompensatedSum::default();
    for &lp in log_probs {
        let p = lp.exp();
        if p > 0.0 {
            h.add(-p * lp);
        }
    }
    h.value().max(0.0)
}

// Second and third moments of `ln p + H` under p. The second equals
// `Σ p (ln p)² - H²`; accumulating it centered avoids the cancellation of the
// raw form for near-uniform distributions.
fn centered_moments(log_probs: &[f64], entropy: f64) -> (f64, f64) {
    let (mut second, mut third) = (CompensatedSum::default(), CompensatedSum::default());
    for &lp in log_probs {
        let p = lp.exp();
        if p > 0.0 {
            let c = lp + entropy;
            let w = p * c * c;
            second.add(w);
            third.add(w * c);
        }
    }
    (second.value().max(0.0), third.value())
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
