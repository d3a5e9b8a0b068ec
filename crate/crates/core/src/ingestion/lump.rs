use crate::error::{Error, Result};
use crate::metrics::{
    logsumexp, Coverage, TokenDistribution, TokenIds, MAX_LOG_PROB, TAIL_TOKEN_ID,
};

/// Slack allowed on the observed top-k mass before it counts as overflow.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Residual mass below which no tail entry is added.
pub const MIN_TAIL_MASS: f64 = 1e-12;

/// Completes an observed top-k list into a distribution by lumping all
/// unobserved mass into one synthetic tail entry.
///
/// Merging entries never increases entropy, so metrics of the result are
/// lower bounds on the full-vocabulary values; the selected token's
/// probability and surprisal are exact.
pub fn lump_tail(topk: &[(u32, f64)], selected: u32) -> Result<TokenDistribution> {
    let selected_index =
        topk.iter()
            .position(|&(id, _)| id == selected)
            .ok_or(Error::SelectionMissing {
                token_id: selected,
                line: None,
            })?;
    if let Some(&(id, lp)) = topk
        .iter()
        .find(|(_, lp)| lp.is_nan() || *lp > MAX_LOG_PROB)
    {
        return Err(Error::InvalidDistribution(format!(
            "token {id} has log-probability {lp}"
        )));
    }
    if topk.iter().any(|&(id, _)| id == TAIL_TOKEN_ID) {
        return Err(Error::InvalidDistribution(format!(
            "token id {TAIL_TOKEN_ID} is reserved for the lumped tail"
        )));
    }

    let log_probs: Vec<f64> = topk.iter().map(|&(_, lp)| lp).collect();
    let total = logsumexp(&log_probs);
    if total > MASS_TOLERANCE {
        return Err(Error::MassOverflow {
            mass: total.exp(),
            line: None,
        });
    }
    let residual = -total.exp_m1();
    let mut ids: Vec<u32> = topk.iter().map(|&(id, _)| id).collect();

    if residual < MIN_TAIL_MASS {
        // Observed entries already hold all the mass; absorb rounding.
        let renormalized: Vec<f64> = log_probs.iter().map(|lp| lp - total).collect();
        return TokenDistribution::from_log_probs(
            renormalized,
            TokenIds::Sparse(ids.into()),
            selected_index,
            Coverage::Full,
        );
    }

    let mut log_probs = log_probs;
    let tail_index = log_probs.len();
    log_probs.push(residual.ln());
    ids.push(TAIL_TOKEN_ID);
    TokenDistribution::from_log_probs(
        log_probs,
        TokenIds::Sparse(ids.into()),
        selected_index,
        Coverage::TopKLumped { tail_index },
    )
}
