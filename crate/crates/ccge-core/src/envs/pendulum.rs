//! Pendulum swing-up, dense reward. Observation: [cos(theta), sin(theta),
//! theta_dot]. One continuous action in [-1, 1], scaled to torque in
//! [-2, 2]. Reward -(theta^2 + 0.1 theta_dot^2 + 0.001 u^2) with theta
//! normalized to [-pi, pi]; no termination, truncates at 200 steps.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_action, Action, ActionSpace, Env, EnvSpec, StepResult};
use crate::math;
use crate::rng::{stream_rng, Stream};

pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const HORIZON: usize = 200;

#[derive(Debug, Clone)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    step_index: usize,
    done: bool,
    clamp_events: u64,
}

fn angle_normalize(x: f64) -> f64 {
    let two_pi = 2.0 * math::PI;
    let r = x - two_pi * math::floor((x + math::PI) / two_pi);
    r
}

impl Pendulum {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        Pendulum { theta: 0.0, theta_dot: 0.0, step_index: 0, done: true, clamp_events: 0 }
    }

    fn obs(&self) -> Vec<f64> {
        alloc::vec![math::cos(self.theta), math::sin(self.theta), self.theta_dot]
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn angular_velocity(&self) -> f64 {
        self.theta_dot
    }
}

impl Env for Pendulum {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Env);
        self.theta = rng.gen_range(-math::PI..math::PI);
        self.theta_dot = rng.gen_range(-1.0..1.0);
        self.step_index = 0;
        self.done = false;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> StepResult {
        assert!(!self.done, "step() called on a finished episode");
        let mut a = match action {
            Action::Continuous(v) => {
                assert_eq!(v.len(), 1, "pendulum takes a 1-dim action");
                [v[0]]
            }
            Action::Discrete(_) => panic!("pendulum takes continuous actions"),
        };
        self.clamp_events += clamp_action(&mut a);
        let torque = a[0] * MAX_TORQUE;

        let th = angle_normalize(self.theta);
        let cost = th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque;

        // Semi-implicit Euler on the standard pendulum ODE.
        let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * math::sin(self.theta)
            + 3.0 / (MASS * LENGTH * LENGTH) * torque;
        self.theta_dot = math::clamp(self.theta_dot + acc * DT, -MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;

        self.step_index += 1;
        let truncated = self.step_index >= HORIZON;
        self.done = truncated;
        StepResult { obs: self.obs(), reward: -cost, terminated: false, truncated }
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec { obs_dim: 3, action_space: ActionSpace::Continuous { dim: 1 }, horizon: HORIZON }
    }

    fn clamp_events(&self) -> u64 {
        self.clamp_events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_metadata() {
        let env = Pendulum::new();
        let spec = env.spec();
        assert_eq!(spec.obs_dim, 3);
        assert_eq!(spec.action_space, ActionSpace::Continuous { dim: 1 });
    }

    #[test]
    fn reward_is_zero_cost_at_upright_rest() {
        let mut env = Pendulum::new();
        env.reset(0);
        env.theta = 0.0;
        env.theta_dot = 0.0;
        let r = env.step(&Action::Continuous(alloc::vec![0.0]));
        assert!(r.reward.abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_action_is_clamped_and_counted() {
        let mut env = Pendulum::new();
        env.reset(0);
        env.step(&Action::Continuous(alloc::vec![5.0]));
        assert_eq!(env.clamp_events(), 1);
    }

    #[test]
    fn angle_normalize_wraps() {
        // maps into [-pi, pi); +-pi are the same physical angle
        assert!((angle_normalize(3.0 * math::PI).abs() - math::PI).abs() < 1e-12);
        assert!((angle_normalize(-3.0 * math::PI).abs() - math::PI).abs() < 1e-9);
        assert!((angle_normalize(0.3) - 0.3).abs() < 1e-12);
        assert!((angle_normalize(math::PI + 0.1) - (-math::PI + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn identical_seed_and_actions_give_identical_trajectories() {
        let run = |seed: u64| {
            let mut env = Pendulum::new();
            let mut trace = alloc::vec![(env.reset(seed), 0.0)];
            for i in 0..50 {
                let a = ((i as f64) * 0.1).sin();
                let r = env.step(&Action::Continuous(alloc::vec![a]));
                trace.push((r.obs, r.reward));
            }
            trace
        };
        assert_eq!(run(9), run(9));
    }
}
