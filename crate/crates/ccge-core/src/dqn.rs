//! DQN with an auxiliary explicit-uncertainty head, used purely as a
//! measurement instrument: the head is trained alongside the Bellman loss but
//! never feeds action selection.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::nn::{clip_grad_norm, AdamW, GradientSet, Mlp};
use crate::replay::Transition;
use crate::uncertainty::{delta_t, explicit_target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub optimizer: AdamW,
    pub batch_size: usize,
    pub eps_explore: f64,
    /// Gradient steps between hard target-network copies.
    pub target_update_every: u64,
    /// Optional max gradient norm (Appendix A.4 Table 1, "max gradient norm").
    pub grad_clip: Option<f64>,
}

impl DqnConfig {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        DqnConfig {
            obs_dim,
            n_actions,
            hidden: vec![64, 64],
            gamma: 0.99,
            optimizer: AdamW { lr: 5e-4, weight_decay: 0.0, ..AdamW::default() },
            batch_size: 256,
            eps_explore: 0.1,
            target_update_every: 1000,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(0.0..=1.0).contains(&self.eps_explore) {
            return Err(CoreError::Config("eps_explore must be in [0, 1]".into()));
        }
        if self.n_actions < 2 {
            return Err(CoreError::Config("need at least two discrete actions".into()));
        }
        if self.target_update_every == 0 {
            return Err(CoreError::Config("target_update_every must be positive".into()));
        }
        Ok(())
    }
}

/// Q-network with 2 * n_actions outputs: Q per action, then one raw
/// uncertainty output per action (non-negative after softplus).
#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: Mlp,
    target: Mlp,
    pub cfg: DqnConfig,
    grad_steps: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(cfg: DqnConfig, rng: &mut R) -> Result<Self, CoreError> {
        cfg.validate()?;
        let mut sizes = vec![cfg.obs_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(2 * cfg.n_actions);
        let online = Mlp::new(&sizes, rng, 1.0)?;
        let target = online.clone();
        Ok(DqnAgent { online, target, cfg, grad_steps: 0 })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    /// Q-values only — the uncertainty head is deliberately not exposed here,
    /// so action selection cannot consult it.
    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>, CoreError> {
        let out = self.online.forward(s)?;
        Ok(out[..self.cfg.n_actions].to_vec())
    }

    /// Head value at (s, a) for diagnostics and the study's logging.
    pub fn uncertainty_at(&self, s: &[f64], action: usize) -> Result<f64, CoreError> {
        let out = self.online.forward(s)?;
        Ok(math::softplus(out[self.cfg.n_actions + action]))
    }

    /// Epsilon-greedy action: uniform with probability eps_explore, else
    /// argmax Q with ties broken toward the lowest index.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R, eps_explore: f64) -> Result<usize, CoreError> {
        if rng.gen::<f64>() < eps_explore {
            return Ok(rng.gen_range(0..self.cfg.n_actions));
        }
        let qs = self.q_values(s)?;
        Ok(argmax_lowest(&qs))
    }

    /// One gradient step of the combined Bellman + uncertainty-head loss,
    /// with a hard target copy every `target_update_every` steps.
    pub fn update(&mut self, batch: &[Transition]) -> Result<f64, CoreError> {
        let targets = dqn_targets(&self.online, &self.target, &self.cfg, batch)?;
        let (loss, mut grads) = dqn_loss_grads(&self.online, &self.cfg, batch, &targets)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFinite("dqn loss".into()));
        }
        if let Some(max_norm) = self.cfg.grad_clip {
            clip_grad_norm(&mut grads, max_norm);
        }
        self.online.adamw_step(&grads, &self.cfg.optimizer)?;
        self.grad_steps += 1;
        if self.grad_steps % self.cfg.target_update_every == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    /// Mean head value over the (state, action) pairs of one episode.
    pub fn episodic_mean_uncertainty(&self, trajectory: &[(Vec<f64>, usize)]) -> Result<f64, CoreError> {
        if trajectory.is_empty() {
            return Err(CoreError::Stats("episodic mean uncertainty of an empty trajectory".into()));
        }
        let mut acc = 0.0;
        for (s, a) in trajectory {
            acc += self.uncertainty_at(s, *a)?;
        }
        Ok(acc / trajectory.len() as f64)
    }
}

pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-transition regression targets (y, eps_target):
/// y = r + gamma * max_a' Q_target(s',a') * (1 - terminal); the head target
/// is bootstrapped through the greedy next action, with delta computed from
/// the detached online Q. Both are constants with respect to gradients.
pub fn dqn_targets(
    online: &Mlp,
    target: &Mlp,
    cfg: &DqnConfig,
    batch: &[Transition],
) -> Result<Vec<(f64, f64)>, CoreError> {
    let n_act = cfg.n_actions;
    let mut targets = Vec::with_capacity(batch.len());
    for t in batch {
        let action = t.a.first().copied().unwrap_or(0.0) as usize;
        if action >= n_act {
            return Err(CoreError::Shape(alloc::format!(
                "discrete action {action} out of range for {n_act} actions"
            )));
        }
        let t_out = target.forward(&t.s_next)?;
        let greedy = argmax_lowest(&t_out[..n_act]);
        let q_next = t_out[greedy];
        let y = if t.terminal { t.r } else { t.r + cfg.gamma * q_next };
        let q = online.forward(&t.s)?[action];
        let eps_next = math::softplus(t_out[n_act + greedy]);
        let delta = delta_t(q, t.r, cfg.gamma, q_next, t.terminal);
        let eps_target = explicit_target(delta, cfg.gamma, eps_next, t.terminal);
        targets.push((y, eps_target));
    }
    Ok(targets)
}

/// Combined DQN loss and gradients against fixed targets: mean over the
/// batch of (Q(s,a) - y)^2 + (eps(s,a) - eps_target)^2.
pub fn dqn_loss_grads(
    online: &Mlp,
    cfg: &DqnConfig,
    batch: &[Transition],
    targets: &[(f64, f64)],
) -> Result<(f64, GradientSet), CoreError> {
    let n_act = cfg.n_actions;
    let inputs: Vec<Vec<f64>> = batch.iter().map(|t| t.s.clone()).collect();
    let outs = online.forward_batch(&inputs)?;
    let mut out_grads = Vec::with_capacity(batch.len());
    // separate accumulators so the combined loss is exactly L_Q + L_E
    let mut loss_q = 0.0;
    let mut loss_e = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let action = t.a.first().copied().unwrap_or(0.0) as usize;
        let (y, eps_target) = targets[i];
        let q = outs[i][action];
        let bellman_res = q - y;
        loss_q += bellman_res * bellman_res;

        let raw = outs[i][n_act + action];
        let eps = math::softplus(raw);
        let head_res = eps - eps_target;
        loss_e += head_res * head_res;

        let mut g = vec![0.0; 2 * n_act];
        g[action] = 2.0 * bellman_res;
        g[n_act + action] = 2.0 * head_res * math::sigmoid(raw);
        out_grads.push(g);
    }
    let n = batch.len().max(1) as f64;
    let loss = loss_q / n + loss_e / n;
    let (grads, _) = online.backward_batch(&inputs, &out_grads)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn small_agent(seed: u64) -> DqnAgent {
        let mut rng = stream_rng(seed, Stream::Actor);
        let cfg = DqnConfig { hidden: vec![16, 16], ..DqnConfig::new(3, 2) };
        DqnAgent::new(cfg, &mut rng).unwrap()
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_lowest(&[1.0, 5.0]), 1);
        assert_eq!(argmax_lowest(&[2.0, 2.0, 1.0]), 0);
        assert_eq!(argmax_lowest(&[0.0]), 0);
    }

    #[test]
    fn greedy_when_eps_zero() {
        let agent = small_agent(1);
        let mut rng = stream_rng(1, Stream::Env);
        let s = [0.1, -0.2, 0.3];
        let qs = agent.q_values(&s).unwrap();
        let greedy = argmax_lowest(&qs);
        for _ in 0..50 {
            assert_eq!(agent.act(&s, &mut rng, 0.0).unwrap(), greedy);
        }
    }

    #[test]
    fn eps_one_is_uniform_chi_squared() {
        let agent = small_agent(2);
        let mut rng = stream_rng(9, Stream::Actor);
        let s = [0.0, 0.0, 0.0];
        let n = 100_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            counts[agent.act(&s, &mut rng, 1.0).unwrap()] += 1;
        }
        let expected = n as f64 / 2.0;
        let chi2: f64 =
            counts.iter().map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected).sum();
        // 1 dof, p = 0.01
        assert!(chi2 < 6.63, "chi2 = {chi2}");
    }

    #[test]
    fn uncertainty_head_values_are_nonnegative() {
        let agent = small_agent(3);
        let mut rng = stream_rng(3, Stream::Env);
        for _ in 0..100 {
            let s: Vec<f64> = (0..3).map(|_| crate::rng::next_standard_normal(&mut rng)).collect();
            for a in 0..2 {
                assert!(agent.uncertainty_at(&s, a).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn episodic_mean_uncertainty_is_the_mean() {
        let agent = small_agent(4);
        let traj = vec![(vec![0.1, 0.2, 0.3], 0), (vec![-0.1, 0.0, 0.5], 1)];
        let by_hand = (agent.uncertainty_at(&traj[0].0, 0).unwrap()
            + agent.uncertainty_at(&traj[1].0, 1).unwrap())
            / 2.0;
        let got = agent.episodic_mean_uncertainty(&traj).unwrap();
        assert!((got - by_hand).abs() < 1e-15);
        // single-step episode returns that step's value
        let single = agent.episodic_mean_uncertainty(&traj[..1]).unwrap();
        assert!((single - agent.uncertainty_at(&traj[0].0, 0).unwrap()).abs() < 1e-15);
        assert!(agent.episodic_mean_uncertainty(&[]).is_err());
    }

    fn transition(s: [f64; 3], a: usize, r: f64, s_next: [f64; 3], terminal: bool) -> Transition {
        Transition {
            s: s.to_vec(),
            a: vec![a as f64],
            r,
            s_next: s_next.to_vec(),
            terminal,
            oracle_a: vec![],
        }
    }

    #[test]
    fn gamma_zero_target_is_reward() {
        let agent = small_agent(5);
        let cfg = DqnConfig { gamma: 0.0, ..agent.cfg.clone() };
        let t = transition([0.1, 0.2, 0.3], 0, 2.5, [0.4, 0.5, 0.6], false);
        // with gamma = 0 the Bellman part of the loss is (Q - r)^2
        let batch = [t.clone()];
        let targets = dqn_targets(&agent.online, &agent.target, &cfg, &batch).unwrap();
        assert_eq!(targets[0].0, 2.5, "gamma = 0 reduces the target to r");
        let (loss, _) = dqn_loss_grads(&agent.online, &cfg, &batch, &targets).unwrap();
        let q = agent.q_values(&t.s).unwrap()[0];
        let bellman = (q - 2.5) * (q - 2.5);
        assert!(loss >= bellman - 1e-12);
        // head target at gamma = 0: sqrt((q - r)^2) = |q - r|
        let raw_eps = agent.online.forward(&t.s).unwrap()[2];
        let head = math::softplus(raw_eps) - (q - 2.5).abs();
        assert!((loss - bellman - head * head).abs() < 1e-12);
    }

    #[test]
    fn exploration_does_not_alter_gradient_math() {
        // identical batches -> identical updates, no matter how actions were picked
        let mut a1 = small_agent(6);
        let mut a2 = a1.clone();
        let batch = vec![
            transition([0.1, 0.0, -0.2], 0, 1.0, [0.2, 0.1, -0.1], false),
            transition([-0.3, 0.2, 0.0], 1, -1.0, [0.0, 0.0, 0.0], true),
        ];
        let l1 = a1.update(&batch).unwrap();
        let l2 = a2.update(&batch).unwrap();
        assert_eq!(l1, l2);
        let s = [0.05, -0.05, 0.1];
        assert_eq!(a1.q_values(&s).unwrap(), a2.q_values(&s).unwrap());
    }

    #[test]
    fn hard_target_copy_cadence() {
        let mut agent = DqnAgent::new(
            DqnConfig { hidden: vec![8], target_update_every: 3, ..DqnConfig::new(3, 2) },
            &mut stream_rng(7, Stream::Actor),
        )
        .unwrap();
        let batch =
            vec![transition([0.1, 0.2, 0.3], 0, 1.0, [0.0, 0.1, 0.2], false)];
        let s = [0.1, 0.2, 0.3];
        let t0 = agent.target.forward(&s).unwrap();
        agent.update(&batch).unwrap();
        agent.update(&batch).unwrap();
        assert_eq!(agent.target.forward(&s).unwrap(), t0, "target frozen before cadence");
        agent.update(&batch).unwrap();
        assert_eq!(
            agent.target.forward(&s).unwrap(),
            agent.online.forward(&s).unwrap(),
            "hard copy on the cadence step"
        );
    }
}
