use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `logsumexp(log_probs) = 0` accepted by [`TokenDistribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Largest log-probability accepted for a single entry.
pub const MAX_LOG_PROB: f64 = 1e-12;

/// Identifier stored at the synthetic tail entry of a lumped distribution.
pub const TAIL_TOKEN_ID: u32 = u32::MAX;

/// How much of the vocabulary a distribution describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Coverage {
    /// Support is the entire vocabulary.
    Full,
    /// Observed top-k entries plus one synthetic entry holding the residual mass.
    TopKLumped { tail_index: usize },
}

/// Vocabulary identifiers aligned with a distribution's log-probabilities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenIds {
    /// Entry `i` is token `i`; the usual layout of a full logit vector.
    Dense(usize),
    Sparse(Arc<[u32]>),
}

impl TokenIds {
    pub fn len(&self) -> usize {
        match self {
            TokenIds::Dense(n) => *n,
            TokenIds::Sparse(ids) => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Option<u32> {
        match self {
            TokenIds::Dense(n) => (index < *n).then_some(index as u32),
            TokenIds::Sparse(ids) => ids.get(index).copied(),
        }
    }

    pub fn position_of(&self, token_id: u32) -> Option<usize> {
        match self {
            TokenIds::Dense(n) => ((token_id as usize) < *n).then_some(token_id as usize),
            TokenIds::Sparse(ids) => ids.iter().position(|&id| id == token_id),
        }
    }
}

/// One generation step's distribution over its support, plus the token that
/// was actually selected.
///
/// Log-probabilities and (when the distribution came from raw scores) the
/// original logits are held behind shared buffers; accessors hand out slices
/// and cloning a distribution never copies them.
#[derive(Clone, Debug)]
pub struct TokenDistribution {
    position: usize,
    raw_logits: Option<Arc<[f64]>>,
    log_probs: Arc<[f64]>,
    token_ids: TokenIds,
    selected_index: usize,
    coverage: Coverage,
}

impl TokenDistribution {
    /// Builds a distribution from already-normalized log-probabilities,
    /// checking every structural invariant.
    pub fn from_log_probs(
        log_probs: impl Into<Arc<[f64]>>,
        token_ids: TokenIds,
        selected_index: usize,
        coverage: Coverage,
    ) -> Result<Self> {
        let log_probs = log_probs.into();
        validate(&log_probs, &token_ids, selected_index, coverage)?;
        Ok(Self {
            position: 0,
            raw_logits: None,
            log_probs,
            token_ids,
            selected_index,
            coverage,
        })
    }

    pub fn with_position(mut self, position: usize) -> Self {
        self.position = position;
        self
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// The unnormalized scores this distribution was derived from, if any.
    pub fn raw_logits(&self) -> Option<&[f64]> {
        self.raw_logits.as_deref()
    }

    pub fn token_ids(&self) -> &TokenIds {
        &self.token_ids
    }

    pub fn selected_index(&self) -> usize {
        self.selected_index
    }

    pub fn selected_token_id(&self) -> u32 {
        self.token_ids
            .get(self.selected_index)
            .expect("selected index validated at construction")
    }

    pub fn selected_log_prob(&self) -> f64 {
        self.log_probs[self.selected_index]
    }

    pub fn coverage(&self) -> Coverage {
        self.coverage
    }

    pub fn tail_index(&self) -> Option<usize> {
        match self.coverage {
            Coverage::Full => None,
            Coverage::TopKLumped { tail_index } => Some(tail_index),
        }
    }

    /// Metrics computed from a lumped distribution are lower bounds, not exact.
    pub fn is_approximate(&self) -> bool {
        matches!(self.coverage, Coverage::TopKLumped { .. })
    }

    pub fn support_size(&self) -> usize {
        self.log_probs.len()
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_probs.iter().map(|lp| lp.exp())
    }
}

fn validate(
    log_probs: &[f64],
    token_ids: &TokenIds,
    selected_index: usize,
    coverage: Coverage,
) -> Result<()> {
    if log_probs.is_empty() {
        return Err(Error::EmptySupport);
    }
    if token_ids.len() != log_probs.len() {
        return Err(Error::InvalidDistribution(format!(
            "{} token ids for {} log-probabilities",
            token_ids.len(),
            log_probs.len()
        )));
    }
    if selected_index >= log_probs.len() {
        return Err(Error::InvalidDistribution(format!(
            "selected index {selected_index} out of range for support {}",
            log_probs.len()
        )));
    }
    if let Some((i, lp)) = log_probs
        .iter()
        .enumerate()
        .find(|(_, lp)| lp.is_nan() || **lp > MAX_LOG_PROB)
    {
        return Err(Error::InvalidDistribution(format!(
            "log-probability {lp} at index {i} is not a valid log-probability"
        )));
    }
    if !log_probs[selected_index].is_finite() {
        return Err(Error::InvalidDistribution(
            "selected token has zero probability".into(),
        ));
    }
    let total = logsumexp(log_probs);
    if total.abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "probabilities do not sum to 1 (logsumexp = {total:e})"
        )));
    }
    if let Coverage::TopKLumped { tail_index } = coverage {
        if tail_index >= log_probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "tail index {tail_index} out of range"
            )));
        }
        if tail_index == selected_index {
            return Err(Error::InvalidDistribution(
                "selected token cannot be the lumped tail".into(),
            ));
        }
    }
    if let TokenIds::Sparse(ids) = token_ids {
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidDistribution(format!(
                "token id {dup} appears more than once"
            )));
        }
    }
    Ok(())
}

/// `ln Σ exp(v)`, evaluated around the maximum so no term overflows.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut rest = CompensatedSum::default();
    let mut skipped = false;
    for &v in values {
        if v == max && !skipped {
            skipped = true;
            continue;
        }
        rest.add((v - max).exp());
    }
    max + rest.value().ln_1p()
}

/// Log-softmax with max subtraction.
///
/// The largest entry's own unit contribution is kept out of the residual sum
/// and recombined through `ln_1p`, so a dominant entry's log-probability keeps
/// full relative precision even when it is within rounding of zero.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let (argmax, max) =
        logits
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
    let mut rest = CompensatedSum::default();
    for (i, v) in logits.iter().enumerate() {
        if i != argmax {
            rest.add((v - max).exp());
        }
    }
    let offset = rest.value().ln_1p();
    logits.iter().map(|v| (v - max) - offset).collect()
}

/// Turns raw scores into a full-vocabulary distribution.
///
/// Entry `i` of `logits` is token `i`. The returned value keeps `logits`
/// alongside the derived log-probabilities.
pub fn normalize_logits(
    logits: impl Into<Arc<[f64]>>,
    selected: usize,
) -> Result<TokenDistribution> {
    let logits: Arc<[f64]> = logits.into();
    if logits.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some((index, &value)) = logits.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidLogits { index, value });
    }
    let n = logits.len();
    let mut dist = TokenDistribution::from_log_probs(
        log_softmax(&logits),
        TokenIds::Dense(n),
        selected,
        Coverage::Full,
    )?;
    dist.raw_logits = Some(logits);
    Ok(dist)
}

/// Neumaier summation. Over large vocabularies plain summation leaves enough
/// rounding in the normalizer and the entropy to visibly move the third
/// centered moment.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum + self.carry
    }
}
