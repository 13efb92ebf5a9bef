//! Epistemic-uncertainty estimators attached to the critic ensemble.
//!
//! Implicit mode reads the population variance of the ensemble's Q-values;
//! explicit mode trains an auxiliary non-negative head toward the root of the
//! discounted squared Bellman residual (the head itself is optimized inside
//! [`crate::sac::critic_loss_grads`], which sums its loss with the Bellman
//! loss into a single step).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::sac::CriticEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyMode {
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyEstimate {
    /// Pessimistic value estimate: min over ensemble members.
    pub q_value: f64,
    /// Non-negative uncertainty attached to it.
    pub epsilon: f64,
}

/// Implicit estimate from a slice of per-member Q-values: q = min,
/// epsilon = population variance. Requires at least two members.
pub fn implicit_uncertainty(q_values: &[f64]) -> Result<UncertaintyEstimate, CoreError> {
    if q_values.len() < 2 {
        return Err(CoreError::Config(
            "implicit uncertainty needs an ensemble of at least two critics".into(),
        ));
    }
    let n = q_values.len() as f64;
    let mean = q_values.iter().sum::<f64>() / n;
    let var = q_values.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / n;
    let q = q_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UncertaintyEstimate { q_value: q, epsilon: var })
}

/// Squared one-step Bellman residual delta_t = (q - r - gamma * q_next)^2,
/// with the bootstrap term dropped on terminal transitions.
pub fn delta_t(q: f64, r: f64, gamma: f64, q_next: f64, terminal: bool) -> f64 {
    let boot = if terminal { 0.0 } else { gamma * q_next };
    let res = q - r - boot;
    res * res
}

/// Regression target for the explicit head:
/// sqrt(delta + gamma * eps_next^2), or sqrt(delta) at terminal states.
pub fn explicit_target(delta: f64, gamma: f64, eps_next: f64, terminal: bool) -> f64 {
    let boot = if terminal { 0.0 } else { gamma * eps_next * eps_next };
    math::sqrt(delta + boot)
}

/// Mode-dispatched estimate at (s, a) from the online ensemble.
pub fn estimate(
    mode: UncertaintyMode,
    critics: &CriticEnsemble,
    s: &[f64],
    a: &[f64],
) -> Result<UncertaintyEstimate, CoreError> {
    match mode {
        UncertaintyMode::Implicit => {
            let qs = critics.q_values(s, a)?;
            implicit_uncertainty(&qs)
        }
        UncertaintyMode::Explicit => {
            if !critics.is_explicit() {
                return Err(CoreError::Config(
                    "explicit uncertainty requested but the critics have no uncertainty head".into(),
                ));
            }
            let (qs, eps) = critics.q_and_eps(s, a)?;
            let q = qs.iter().copied().fold(f64::INFINITY, f64::min);
            let e = eps.iter().sum::<f64>() / eps.len() as f64;
            Ok(UncertaintyEstimate { q_value: q, epsilon: e })
        }
    }
}

/// Mean estimate over a batch of (s, a) pairs (diagnostics/metrics).
pub fn mean_epsilon(
    mode: UncertaintyMode,
    critics: &CriticEnsemble,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64, CoreError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (s, a) in pairs {
        acc += estimate(mode, critics, s, a)?.epsilon;
    }
    Ok(acc / pairs.len() as f64)
}
