//! SAC-v2 agent: squashed-Gaussian actor, twin-critic ensemble with target
//! networks, automatic entropy-temperature tuning.
//!
//! The update is decomposed into `update_critics` / `actor_grads` /
//! `update_alpha` / `polyak_targets` so the guidance controller in
//! [`crate::ccge`] can swap only the actor loss, and so each loss can be
//! finite-difference checked in isolation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::nn::{clip_grad_norm, AdamW, GradientSet, Mlp};
use crate::replay::Transition;
use crate::rng::fill_standard_normal;
use crate::uncertainty::{delta_t, explicit_target};

/// Epsilon inside the tanh change-of-variables correction.
pub const TANH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub optimizer: AdamW,
    pub batch_size: usize,
    pub target_entropy: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub n_critics: usize,
    /// Train the auxiliary uncertainty head alongside the Bellman loss.
    pub explicit_uncertainty: bool,
    pub grad_clip: Option<f64>,
    /// Multiplier on the actor's final-layer init so early actions stay
    /// near-uniform.
    pub actor_final_layer_scale: f64,
}

impl SacConfig {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        SacConfig {
            obs_dim,
            act_dim,
            hidden: vec![256, 256],
            gamma: 0.99,
            tau: 0.005,
            optimizer: AdamW { weight_decay: 0.0, ..AdamW::default() },
            batch_size: 256,
            target_entropy: -(act_dim as f64),
            log_std_min: -20.0,
            log_std_max: 2.0,
            n_critics: 2,
            explicit_uncertainty: false,
            grad_clip: None,
            actor_final_layer_scale: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(CoreError::Config("gamma must be in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(CoreError::Config("tau must be in [0, 1]".into()));
        }
        if self.n_critics < 2 {
            return Err(CoreError::Config("critic ensemble size must be >= 2".into()));
        }
        if self.hidden.is_empty() {
            return Err(CoreError::Config("at least one hidden layer required".into()));
        }
        Ok(())
    }
}

/// Cached intermediates of one reparameterized actor forward pass.
#[derive(Debug, Clone)]
pub struct ActorSample {
    /// Raw network output: [mean..., log_std_raw...].
    pub raw: Vec<f64>,
    pub xi: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Squashed-Gaussian policy head over an [`Mlp`].
#[derive(Debug, Clone)]
pub struct GaussianActor {
    net: Mlp,
    act_dim: usize,
    log_std_min: f64,
    log_std_max: f64,
}

impl GaussianActor {
    pub fn new<R: Rng + ?Sized>(cfg: &SacConfig, rng: &mut R) -> Result<Self, CoreError> {
        let mut sizes = vec![cfg.obs_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(2 * cfg.act_dim);
        Ok(GaussianActor {
            net: Mlp::new(&sizes, rng, cfg.actor_final_layer_scale)?,
            act_dim: cfg.act_dim,
            log_std_min: cfg.log_std_min,
            log_std_max: cfg.log_std_max,
        })
    }

    pub fn from_net(net: Mlp, act_dim: usize, log_std_min: f64, log_std_max: f64) -> Result<Self, CoreError> {
        if net.output_dim() != 2 * act_dim {
            return Err(CoreError::Shape(alloc::format!(
                "actor net outputs {} values, expected {}",
                net.output_dim(),
                2 * act_dim
            )));
        }
        Ok(GaussianActor { net, act_dim, log_std_min, log_std_max })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Reparameterized sample with externally supplied standard-normal noise.
    pub fn sample_with_noise(&self, s: &[f64], xi: &[f64]) -> Result<ActorSample, CoreError> {
        let raw = self.net.forward(s)?;
        let mut action = vec![0.0; self.act_dim];
        let mut log_prob = 0.0;
        for i in 0..self.act_dim {
            let mu = raw[i];
            let ls = math::clamp(raw[self.act_dim + i], self.log_std_min, self.log_std_max);
            let sigma = math::exp(ls);
            let u = mu + sigma * xi[i];
            let a = math::tanh(u);
            action[i] = a;
            log_prob += -0.5 * xi[i] * xi[i] - 0.5 * math::LN_2PI - ls - math::ln(1.0 - a * a + TANH_EPS);
        }
        Ok(ActorSample { raw, xi: xi.to_vec(), action, log_prob })
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<ActorSample, CoreError> {
        let mut xi = vec![0.0; self.act_dim];
        fill_standard_normal(rng, &mut xi);
        self.sample_with_noise(s, &xi)
    }

    /// Deterministic mean-mode action used for evaluation.
    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>, CoreError> {
        let raw = self.net.forward(s)?;
        Ok((0..self.act_dim).map(|i| math::tanh(raw[i])).collect())
    }

    /// Log-density of an explicit action under the squashed Gaussian
    /// (quadrature/test support; training uses the reparameterized path).
    pub fn log_prob_of(&self, s: &[f64], action: &[f64]) -> Result<f64, CoreError> {
        let raw = self.net.forward(s)?;
        let mut log_prob = 0.0;
        for i in 0..self.act_dim {
            let mu = raw[i];
            let ls = math::clamp(raw[self.act_dim + i], self.log_std_min, self.log_std_max);
            let sigma = math::exp(ls);
            let a = math::clamp(action[i], -1.0 + 1e-12, 1.0 - 1e-12);
            let u = math::atanh(a);
            let z = (u - mu) / sigma;
            log_prob += -0.5 * z * z - 0.5 * math::LN_2PI - ls - math::ln(1.0 - a * a + TANH_EPS);
        }
        Ok(log_prob)
    }

    /// Gradient of `d_logp * log_prob + <d_a, action>`-style chains with
    /// respect to the raw network outputs, given the cached sample.
    pub fn output_grad(&self, cache: &ActorSample, d_a: &[f64], d_logp: f64) -> Vec<f64> {
        let mut grad = vec![0.0; 2 * self.act_dim];
        for i in 0..self.act_dim {
            let ls_raw = cache.raw[self.act_dim + i];
            let ls = math::clamp(ls_raw, self.log_std_min, self.log_std_max);
            let sigma = math::exp(ls);
            let a = cache.action[i];
            let one_m_a2 = 1.0 - a * a;
            // d log_prob / d u  (only the tanh correction depends on u)
            let dlogp_du = 2.0 * a * one_m_a2 / (one_m_a2 + TANH_EPS);
            let da_du = one_m_a2;
            let du_dls = sigma * cache.xi[i];
            grad[i] = d_logp * dlogp_du + d_a[i] * da_du;
            let g_ls = d_logp * (-1.0 + dlogp_du * du_dls) + d_a[i] * da_du * du_dls;
            // hard clamp: zero gradient outside the bounds
            grad[self.act_dim + i] =
                if ls_raw <= self.log_std_min || ls_raw >= self.log_std_max { 0.0 } else { g_ls };
        }
        grad
    }
}

/// Ensemble of Q-networks mapping (s, a) -> Q (plus an auxiliary
/// non-negative uncertainty output in explicit mode), with matching
/// target networks.
#[derive(Debug, Clone)]
pub struct CriticEnsemble {
    members: Vec<Mlp>,
    targets: Vec<Mlp>,
    explicit: bool,
    obs_dim: usize,
    act_dim: usize,
}

impl CriticEnsemble {
    pub fn new<R: Rng + ?Sized>(cfg: &SacConfig, rng: &mut R) -> Result<Self, CoreError> {
        let out = if cfg.explicit_uncertainty { 2 } else { 1 };
        let mut sizes = vec![cfg.obs_dim + cfg.act_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(out);
        let mut members = Vec::with_capacity(cfg.n_critics);
        for _ in 0..cfg.n_critics {
            members.push(Mlp::new(&sizes, rng, 1.0)?);
        }
        let targets = members.clone();
        Ok(CriticEnsemble {
            members,
            targets,
            explicit: cfg.explicit_uncertainty,
            obs_dim: cfg.obs_dim,
            act_dim: cfg.act_dim,
        })
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn members_mut(&mut self) -> &mut [Mlp] {
        &mut self.members
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.targets
    }

    pub fn input(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x
    }

    fn split_out(&self, out: &[f64]) -> (f64, f64) {
        let q = out[0];
        let eps = if self.explicit { math::softplus(out[1]) } else { 0.0 };
        (q, eps)
    }

    /// Per-member online Q estimates at (s, a).
    pub fn q_values(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>, CoreError> {
        let x = self.input(s, a);
        self.members.iter().map(|m| Ok(m.forward(&x)?[0])).collect()
    }

    /// Per-member online (Q, uncertainty-head) at (s, a).
    pub fn q_and_eps(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>), CoreError> {
        let x = self.input(s, a);
        let mut qs = Vec::with_capacity(self.members.len());
        let mut eps = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let out = m.forward(&x)?;
            let (q, e) = self.split_out(&out);
            qs.push(q);
            eps.push(e);
        }
        Ok((qs, eps))
    }

    /// Per-member target-network (Q, uncertainty-head) at (s, a).
    pub fn target_q_and_eps(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>), CoreError> {
        let x = self.input(s, a);
        let mut qs = Vec::with_capacity(self.targets.len());
        let mut eps = Vec::with_capacity(self.targets.len());
        for m in &self.targets {
            let out = m.forward(&x)?;
            let (q, e) = self.split_out(&out);
            qs.push(q);
            eps.push(e);
        }
        Ok((qs, eps))
    }

    pub fn min_q(&self, s: &[f64], a: &[f64]) -> Result<f64, CoreError> {
        let qs = self.q_values(s, a)?;
        Ok(qs.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn polyak(&mut self, tau: f64) -> Result<(), CoreError> {
        for (t, o) in self.targets.iter_mut().zip(&self.members) {
            t.polyak_from(o, tau)?;
        }
        Ok(())
    }
}

/// Loss values from one full agent update.
#[derive(Debug, Clone, Default)]
pub struct SacLosses {
    /// Per-member combined critic loss (Bellman + head in explicit mode).
    pub critic: Vec<f64>,
    pub actor: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

/// SAC-v2 agent.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub actor: GaussianActor,
    pub critics: CriticEnsemble,
    pub cfg: SacConfig,
    log_alpha: f64,
    alpha_m: f64,
    alpha_v: f64,
    alpha_step: u64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(cfg: SacConfig, rng: &mut R) -> Result<Self, CoreError> {
        cfg.validate()?;
        let actor = GaussianActor::new(&cfg, rng)?;
        let critics = CriticEnsemble::new(&cfg, rng)?;
        Ok(SacAgent { actor, critics, cfg, log_alpha: 0.0, alpha_m: 0.0, alpha_v: 0.0, alpha_step: 0 })
    }

    pub fn alpha(&self) -> f64 {
        math::exp(self.log_alpha)
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn set_log_alpha(&mut self, v: f64) {
        self.log_alpha = v;
    }

    /// Bellman targets: y = r for terminal transitions, else
    /// r + gamma * (min_i Q_target_i(s', a') - alpha * log pi(a'|s')) with a'
    /// freshly sampled. Constant with respect to all gradients.
    pub fn critic_targets<R: Rng + ?Sized>(
        &self,
        batch: &[Transition],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<ActorSample>), CoreError> {
        let alpha = self.alpha();
        let mut ys = Vec::with_capacity(batch.len());
        let mut next_samples = Vec::with_capacity(batch.len());
        for t in batch {
            let sample = self.actor.sample(&t.s_next, rng)?;
            let y = if t.terminal {
                t.r
            } else {
                let (qs, _) = self.critics.target_q_and_eps(&t.s_next, &sample.action)?;
                let min_q = qs.iter().copied().fold(f64::INFINITY, f64::min);
                t.r + self.cfg.gamma * (min_q - alpha * sample.log_prob)
            };
            ys.push(y);
            next_samples.push(sample);
        }
        Ok((ys, next_samples))
    }

    /// One gradient step on every ensemble member: mean squared error to `y`,
    /// plus the uncertainty-head residual loss in explicit mode (the two are
    /// summed into a single step). Returns per-member combined loss.
    pub fn update_critics<R: Rng + ?Sized>(
        &mut self,
        batch: &[Transition],
        rng: &mut R,
    ) -> Result<Vec<f64>, CoreError> {
        let (ys, next_samples) = self.critic_targets(batch, rng)?;
        let losses = self.critic_step_with_targets(batch, &ys, &next_samples)?;
        Ok(losses)
    }

    /// Critic step against precomputed targets (split out for tests and for
    /// callers that reuse the sampled next actions).
    pub fn critic_step_with_targets(
        &mut self,
        batch: &[Transition],
        ys: &[f64],
        next_samples: &[ActorSample],
    ) -> Result<Vec<f64>, CoreError> {
        let inputs: Vec<Vec<f64>> = batch.iter().map(|t| self.critics.input(&t.s, &t.a)).collect();
        let n_members = self.critics.n();
        let mut losses = Vec::with_capacity(n_members);
        let mut updates: Vec<GradientSet> = Vec::with_capacity(n_members);
        for mi in 0..n_members {
            let eps_targets =
                critic_head_targets(&self.critics, mi, batch, &inputs, next_samples, self.cfg.gamma)?;
            let (loss, grads) =
                critic_loss_grads(&self.critics, mi, &inputs, ys, &eps_targets)?;
            if !loss.is_finite() {
                return Err(CoreError::NonFinite(alloc::format!("critic {mi} loss")));
            }
            losses.push(loss);
            updates.push(grads);
        }
        for (mi, mut grads) in updates.into_iter().enumerate() {
            if let Some(max_norm) = self.cfg.grad_clip {
                clip_grad_norm(&mut grads, max_norm);
            }
            self.critics.members_mut()[mi].adamw_step(&grads, &self.cfg.optimizer)?;
        }
        Ok(losses)
    }

    /// Applies a precomputed actor gradient (one AdamW step with clipping).
    pub fn apply_actor_grads(&mut self, mut grads: GradientSet) -> Result<(), CoreError> {
        if let Some(max_norm) = self.cfg.grad_clip {
            clip_grad_norm(&mut grads, max_norm);
        }
        self.actor.net_mut().adamw_step(&grads, &self.cfg.optimizer)
    }

    /// Gradient step on log_alpha toward the fixed point
    /// E[log pi] = -target_entropy. Alpha stays positive by construction.
    pub fn update_alpha(&mut self, log_probs: &[f64]) -> f64 {
        let target = self.cfg.target_entropy;
        let mean_excess =
            log_probs.iter().map(|lp| lp + target).sum::<f64>() / log_probs.len().max(1) as f64;
        // loss = -log_alpha * mean(log pi + target_entropy)
        let loss = -self.log_alpha * mean_excess;
        let grad = -mean_excess;
        // scalar Adam on log_alpha, no weight decay
        let opt = &self.cfg.optimizer;
        self.alpha_step += 1;
        let t = self.alpha_step as f64;
        self.alpha_m = opt.beta1 * self.alpha_m + (1.0 - opt.beta1) * grad;
        self.alpha_v = opt.beta2 * self.alpha_v + (1.0 - opt.beta2) * grad * grad;
        let m_hat = self.alpha_m / (1.0 - libm::pow(opt.beta1, t));
        let v_hat = self.alpha_v / (1.0 - libm::pow(opt.beta2, t));
        self.log_alpha -= opt.lr * m_hat / (math::sqrt(v_hat) + opt.eps);
        loss
    }

    pub fn polyak_targets(&mut self) -> Result<(), CoreError> {
        self.critics.polyak(self.cfg.tau)
    }

    /// Plain SAC update: critic step, actor step, temperature step, polyak.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[Transition], rng: &mut R) -> Result<SacLosses, CoreError> {
        let critic = self.update_critics(batch, rng)?;
        let mut noise = Vec::with_capacity(batch.len());
        for _ in 0..batch.len() {
            let mut xi = vec![0.0; self.cfg.act_dim];
            fill_standard_normal(rng, &mut xi);
            noise.push(xi);
        }
        let states: Vec<&[f64]> = batch.iter().map(|t| t.s.as_slice()).collect();
        let (actor_loss, grads, log_probs) =
            actor_loss_grads(&self.actor, &self.critics, &states, &noise, self.alpha())?;
        if !actor_loss.is_finite() {
            return Err(CoreError::NonFinite("actor loss".into()));
        }
        self.apply_actor_grads(grads)?;
        let alpha_loss = self.update_alpha(&log_probs);
        self.polyak_targets()?;
        Ok(SacLosses { critic, actor: actor_loss, alpha_loss, alpha: self.alpha() })
    }
}

/// Uncertainty-head regression targets for ensemble member `member_idx`:
/// sqrt(delta + gamma * eps_next^2) per transition, with delta computed from
/// the member's own (detached) online Q and its target network's next-state
/// values, so both losses share one target convention. Returns an empty
/// vector in implicit mode. Targets are constants with respect to gradients.
pub fn critic_head_targets(
    critics: &CriticEnsemble,
    member_idx: usize,
    batch: &[Transition],
    inputs: &[Vec<f64>],
    next_samples: &[ActorSample],
    gamma: f64,
) -> Result<Vec<f64>, CoreError> {
    if !critics.is_explicit() {
        return Ok(Vec::new());
    }
    let member = &critics.members()[member_idx];
    let target = &critics.targets()[member_idx];
    let mut eps_targets = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let q = member.forward(&inputs[i])?[0];
        let x_next = critics.input(&t.s_next, &next_samples[i].action);
        let t_out = target.forward(&x_next)?;
        let q_next = t_out[0];
        let eps_next = math::softplus(t_out[1]);
        let delta = delta_t(q, t.r, gamma, q_next, t.terminal);
        eps_targets.push(explicit_target(delta, gamma, eps_next, t.terminal));
    }
    Ok(eps_targets)
}

/// Combined loss and gradients for ensemble member `member_idx`:
/// mean over the batch of the squared Bellman error to `ys` plus (explicit
/// mode) the squared head residual to `eps_targets`, summed into one step.
pub fn critic_loss_grads(
    critics: &CriticEnsemble,
    member_idx: usize,
    inputs: &[Vec<f64>],
    ys: &[f64],
    eps_targets: &[f64],
) -> Result<(f64, GradientSet), CoreError> {
    let member = &critics.members()[member_idx];
    let outs = member.forward_batch(inputs)?;
    let explicit = critics.is_explicit();
    if explicit && eps_targets.len() != inputs.len() {
        return Err(CoreError::Shape("one head target per transition required".into()));
    }
    let mut out_grads = Vec::with_capacity(inputs.len());
    // separate accumulators so the combined loss is exactly L_Q + L_E
    let mut loss_q = 0.0;
    let mut loss_e = 0.0;
    for i in 0..inputs.len() {
        let q = outs[i][0];
        let bellman_res = q - ys[i];
        loss_q += bellman_res * bellman_res;
        let mut g = vec![0.0; outs[i].len()];
        g[0] = 2.0 * bellman_res;
        if explicit {
            let raw = outs[i][1];
            let eps = math::softplus(raw);
            let head_res = eps - eps_targets[i];
            loss_e += head_res * head_res;
            g[1] = 2.0 * head_res * math::sigmoid(raw);
        }
        out_grads.push(g);
    }
    let n = inputs.len().max(1) as f64;
    let loss = loss_q / n + loss_e / n;
    let (grads, _) = member.backward_batch(inputs, &out_grads)?;
    Ok((loss, grads))
}

/// Plain SAC actor loss E[alpha * log pi(a|s) - min_i Q_i(s, a)] with
/// reparameterized actions; returns (loss, actor gradients, per-sample log
/// probabilities). Critic parameters are untouched.
pub fn actor_loss_grads(
    actor: &GaussianActor,
    critics: &CriticEnsemble,
    states: &[&[f64]],
    noise: &[Vec<f64>],
    alpha: f64,
) -> Result<(f64, GradientSet, Vec<f64>), CoreError> {
    let n = states.len();
    let mut caches = Vec::with_capacity(n);
    for (s, xi) in states.iter().zip(noise) {
        caches.push(actor.sample_with_noise(s, xi)?);
    }
    let mut loss = 0.0;
    let mut actor_out_grads = Vec::with_capacity(n);
    let mut log_probs = Vec::with_capacity(n);
    for (i, s) in states.iter().enumerate() {
        let cache = &caches[i];
        let (q_min, dq_da) = min_q_with_action_grad(critics, s, &cache.action)?;
        loss += alpha * cache.log_prob - q_min;
        // dL/da = -dQ/da
        let d_a: Vec<f64> = dq_da.iter().map(|g| -g).collect();
        actor_out_grads.push(actor.output_grad(cache, &d_a, alpha));
        log_probs.push(cache.log_prob);
    }
    loss /= n.max(1) as f64;
    let inputs: Vec<Vec<f64>> = states.iter().map(|s| s.to_vec()).collect();
    let (grads, _) = actor.net().backward_batch(&inputs, &actor_out_grads)?;
    Ok((loss, grads, log_probs))
}

/// min_i Q_i(s, a) together with its gradient with respect to the action
/// (through the argmin member only).
pub fn min_q_with_action_grad(
    critics: &CriticEnsemble,
    s: &[f64],
    a: &[f64],
) -> Result<(f64, Vec<f64>), CoreError> {
    let x = critics.input(s, a);
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    for (mi, m) in critics.members().iter().enumerate() {
        let q = m.forward(&x)?[0];
        if q < best {
            best = q;
            best_idx = mi;
        }
    }
    let member = &critics.members()[best_idx];
    let mut out_grad = vec![0.0; member.output_dim()];
    out_grad[0] = 1.0;
    let (_, input_grads) = member.backward_batch(core::slice::from_ref(&x), core::slice::from_ref(&out_grad))?;
    let dq_da = input_grads[0][s.len()..].to_vec();
    Ok((best, dq_da))
}
