//! Critic-confidence guided exploration: the scalar confidence signal k,
//! the per-sample actor-loss switch between behavioral supervision and the
//! SAC objective, and the training-time rollout override.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::nn::GradientSet;
use crate::replay::Transition;
use crate::rng::fill_standard_normal;
use crate::sac::{min_q_with_action_grad, GaussianActor, SacAgent, SacLosses};
use crate::uncertainty::{estimate, UncertaintyEstimate, UncertaintyMode};

/// Guard floor on |q| in the denominator of k.
pub const EPS_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcgeConfig {
    /// Confidence threshold: k >= lambda hands control to the oracle.
    pub lambda: f64,
    pub mode: UncertaintyMode,
    /// Allow the oracle to override rollout actions during training.
    pub guidance_enabled: bool,
    /// Allow the supervised branch of the actor loss.
    pub supervision_enabled: bool,
    pub eps_guard: f64,
}

impl CcgeConfig {
    pub fn new(lambda: f64, mode: UncertaintyMode) -> Self {
        CcgeConfig { lambda, mode, guidance_enabled: true, supervision_enabled: true, eps_guard: EPS_GUARD }
    }
}

/// Optimistic upper bound Q_UB = Q + epsilon.
pub fn q_upper_bound(est: &UncertaintyEstimate) -> f64 {
    est.q_value + est.epsilon
}

/// Potential improvement of the oracle over the policy:
/// Delta = Q_UB(s, a_oracle) - Q_UB(s, a_policy).
pub fn potential_improvement(oracle_ub: f64, policy_ub: f64) -> f64 {
    oracle_ub - policy_ub
}

/// Normalized confidence k = Delta / max(|q|, eps_guard), where q is the
/// policy action's pessimistic value.
pub fn confidence_k(delta: f64, q_policy: f64, eps_guard: f64) -> f64 {
    let denom = if crate::math::abs(q_policy) > eps_guard { crate::math::abs(q_policy) } else { eps_guard };
    delta / denom
}

/// Full confidence computation at one state.
pub fn compute_k(
    cfg: &CcgeConfig,
    agent: &SacAgent,
    s: &[f64],
    a_policy: &[f64],
    a_oracle: &[f64],
) -> Result<f64, CoreError> {
    let est_policy = estimate(cfg.mode, &agent.critics, s, a_policy)?;
    let est_oracle = estimate(cfg.mode, &agent.critics, s, a_oracle)?;
    let delta = potential_improvement(q_upper_bound(&est_oracle), q_upper_bound(&est_policy));
    Ok(confidence_k(delta, est_policy.q_value, cfg.eps_guard))
}

/// The single guidance predicate shared by the rollout override and the
/// per-sample actor-loss switch.
pub fn guidance_predicate(k: f64, lambda: f64) -> bool {
    k >= lambda
}

/// Pure decision rule of the rollout override: the oracle action is taken
/// iff training and guidance are enabled and k >= lambda. Evaluation
/// (training = false) is never overridden.
pub fn select_action(
    a: Vec<f64>,
    a_oracle: &[f64],
    k: f64,
    lambda: f64,
    training: bool,
    guidance_enabled: bool,
) -> (Vec<f64>, bool) {
    if training && guidance_enabled && guidance_predicate(k, lambda) {
        (a_oracle.to_vec(), true)
    } else {
        (a, false)
    }
}

/// Outcome of the training-time rollout action selection.
#[derive(Debug, Clone)]
pub struct RolloutChoice {
    pub action: Vec<f64>,
    pub oracle_action: Vec<f64>,
    pub used_oracle: bool,
    pub k: f64,
}

/// Training-rollout action: samples the policy, computes k against the
/// oracle's suggestion, and overrides with the oracle when k >= lambda
/// (only while `guidance_enabled`). Evaluation never calls this.
pub fn select_rollout_action<R: Rng + ?Sized>(
    cfg: &CcgeConfig,
    agent: &SacAgent,
    s: &[f64],
    a_oracle: &[f64],
    rng: &mut R,
) -> Result<RolloutChoice, CoreError> {
    let sample = agent.actor.sample(s, rng)?;
    let k = compute_k(cfg, agent, s, &sample.action, a_oracle)?;
    let (action, used_oracle) =
        select_action(sample.action, a_oracle, k, cfg.lambda, true, cfg.guidance_enabled);
    Ok(RolloutChoice { action, oracle_action: a_oracle.to_vec(), used_oracle, k })
}

/// Guidance bookkeeping over an interval of steps or one update batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct GuidanceStats {
    pub guided: usize,
    pub total: usize,
    pub mean_k: f64,
}

impl GuidanceStats {
    pub fn record(&mut self, guided: bool) {
        self.total += 1;
        if guided {
            self.guided += 1;
        }
    }

    /// Fraction of steps where the oracle was consulted.
    pub fn guidance_ratio(&self) -> Result<f64, CoreError> {
        if self.total == 0 {
            return Err(CoreError::Stats("guidance ratio of an empty interval".into()));
        }
        Ok(self.guided as f64 / self.total as f64)
    }
}

/// Squared-error supervision loss: mean over the batch of ||a - a_oracle||^2
/// with reparameterized actions a ~ pi(.|s).
pub fn supervision_loss(
    actor: &GaussianActor,
    states: &[&[f64]],
    oracle_actions: &[Vec<f64>],
    noise: &[Vec<f64>],
) -> Result<f64, CoreError> {
    let mut loss = 0.0;
    for ((s, a_oracle), xi) in states.iter().zip(oracle_actions).zip(noise) {
        let sample = actor.sample_with_noise(s, xi)?;
        loss += sample
            .action
            .iter()
            .zip(a_oracle)
            .map(|(a, o)| (a - o) * (a - o))
            .sum::<f64>();
    }
    Ok(loss / states.len().max(1) as f64)
}

/// CCGE actor loss: per sample, if k >= lambda the loss is the squared
/// distance ||a - a_oracle||^2 (behavioral supervision), otherwise the plain
/// SAC actor loss alpha * log pi - min Q. Returns (loss, gradients,
/// per-sample log probs, stats). With lambda = +inf this reduces exactly to
/// the SAC actor loss.
pub fn ccge_actor_loss_grads(
    cfg: &CcgeConfig,
    actor: &GaussianActor,
    agent: &SacAgent,
    batch: &[Transition],
    noise: &[Vec<f64>],
    alpha: f64,
) -> Result<(f64, GradientSet, Vec<f64>, GuidanceStats), CoreError> {
    let n = batch.len();
    let mut loss = 0.0;
    let mut out_grads = Vec::with_capacity(n);
    let mut log_probs = Vec::with_capacity(n);
    let mut stats = GuidanceStats { total: n, ..GuidanceStats::default() };
    let mut k_sum = 0.0;
    for (t, xi) in batch.iter().zip(noise) {
        let cache = actor.sample_with_noise(&t.s, xi)?;
        log_probs.push(cache.log_prob);
        if t.oracle_a.is_empty() {
            return Err(CoreError::Config(
                "ccge actor loss on a transition with no stored oracle action".into(),
            ));
        }
        let k = compute_k(cfg, agent, &t.s, &cache.action, &t.oracle_a)?;
        k_sum += k;
        let supervise = cfg.supervision_enabled && guidance_predicate(k, cfg.lambda);
        if supervise {
            stats.guided += 1;
            let mut sample_loss = 0.0;
            let mut d_a = vec![0.0; cache.action.len()];
            for (j, (ai, oi)) in cache.action.iter().zip(&t.oracle_a).enumerate() {
                let diff = ai - oi;
                sample_loss += diff * diff;
                d_a[j] = 2.0 * diff;
            }
            loss += sample_loss;
            out_grads.push(actor.output_grad(&cache, &d_a, 0.0));
        } else {
            let (q_min, dq_da) = min_q_with_action_grad(&agent.critics, &t.s, &cache.action)?;
            loss += alpha * cache.log_prob - q_min;
            let d_a: Vec<f64> = dq_da.iter().map(|g| -g).collect();
            out_grads.push(actor.output_grad(&cache, &d_a, alpha));
        }
    }
    loss /= n.max(1) as f64;
    stats.mean_k = if n == 0 { 0.0 } else { k_sum / n as f64 };
    let inputs: Vec<Vec<f64>> = batch.iter().map(|t| t.s.clone()).collect();
    let (grads, _) = actor.net().backward_batch(&inputs, &out_grads)?;
    Ok((loss, grads, log_probs, stats))
}

/// Full CCGE update: critic step (shared with SAC), confidence-switched
/// actor step, temperature step, polyak averaging.
pub fn ccge_update<R: Rng + ?Sized>(
    cfg: &CcgeConfig,
    agent: &mut SacAgent,
    batch: &[Transition],
    rng: &mut R,
) -> Result<(SacLosses, GuidanceStats), CoreError> {
    let critic = agent.update_critics(batch, rng)?;
    let mut noise = Vec::with_capacity(batch.len());
    for _ in 0..batch.len() {
        let mut xi = vec![0.0; agent.cfg.act_dim];
        fill_standard_normal(rng, &mut xi);
        noise.push(xi);
    }
    let alpha = agent.alpha();
    let (actor_loss, grads, log_probs, stats) =
        ccge_actor_loss_grads(cfg, &agent.actor, agent, batch, &noise, alpha)?;
    if !actor_loss.is_finite() {
        return Err(CoreError::NonFinite("ccge actor loss".into()));
    }
    agent.apply_actor_grads(grads)?;
    let alpha_loss = agent.update_alpha(&log_probs);
    agent.polyak_targets()?;
    Ok((SacLosses { critic, actor: actor_loss, alpha_loss, alpha: agent.alpha() }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_guard_floors_small_denominators() {
        // |q| below the guard uses the guard itself
        let k = confidence_k(1e-6, 0.0, EPS_GUARD);
        assert!((k - 1.0).abs() < 1e-12);
        let k = confidence_k(2.0, -4.0, EPS_GUARD);
        assert!((k - 0.5).abs() < 1e-12);
        // sign of q never flips k's sign
        assert!(confidence_k(1.0, -0.5, EPS_GUARD) > 0.0);
    }

    #[test]
    fn upper_bound_and_delta() {
        let a = UncertaintyEstimate { q_value: 1.0, epsilon: 0.5 };
        let b = UncertaintyEstimate { q_value: 2.0, epsilon: 0.25 };
        assert_eq!(q_upper_bound(&a), 1.5);
        assert_eq!(potential_improvement(q_upper_bound(&b), q_upper_bound(&a)), 0.75);
    }
}
