//! Cart-pole balancing with the classical published constants, explicit Euler
//! at dt = 0.02. Observation: [x, x_dot, theta, theta_dot]. Two discrete
//! actions: 0 pushes left, 1 pushes right. Reward +1 per step; terminates
//! when |x| > 2.4 or |theta| > ~12 degrees; truncates at 500 steps.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, Env, EnvSpec, StepResult};
use crate::rng::{stream_rng, Stream};

pub const GRAVITY: f64 = 9.8;
pub const MASS_CART: f64 = 1.0;
pub const MASS_POLE: f64 = 0.1;
pub const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const POLE_MASS_LENGTH: f64 = MASS_POLE * POLE_HALF_LENGTH;
pub const FORCE_MAG: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * core::f64::consts::PI / 180.0;
pub const HORIZON: usize = 500;

#[derive(Debug, Clone)]
pub struct CartPole {
    state: [f64; 4],
    step_index: usize,
    done: bool,
}

impl CartPole {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        CartPole { state: [0.0; 4], step_index: 0, done: true }
    }

    /// Accelerations (x_ddot, theta_ddot) of the standard cart-pole ODE.
    pub fn accelerations(state: &[f64; 4], force: f64) -> (f64, f64) {
        let theta = state[2];
        let theta_dot = state[3];
        let cos_t = crate::math::cos(theta);
        let sin_t = crate::math::sin(theta);
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_t) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin_t - cos_t * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS;
        (x_acc, theta_acc)
    }

    /// One explicit-Euler tick at [`DT`], exposed for dynamics tests.
    pub fn euler_tick(state: &[f64; 4], force: f64) -> [f64; 4] {
        let (x_acc, theta_acc) = Self::accelerations(state, force);
        [
            state[0] + DT * state[1],
            state[1] + DT * x_acc,
            state[2] + DT * state[3],
            state[3] + DT * theta_acc,
        ]
    }
}

impl Env for CartPole {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Env);
        for s in self.state.iter_mut() {
            *s = rng.gen_range(-0.05..0.05);
        }
        self.step_index = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> StepResult {
        assert!(!self.done, "step() called on a finished episode");
        let act = match action {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => panic!("cartpole takes discrete actions"),
        };
        let force = if act == 1 { FORCE_MAG } else { -FORCE_MAG };
        self.state = Self::euler_tick(&self.state, force);
        self.step_index += 1;
        let terminated =
            crate::math::abs(self.state[0]) > X_LIMIT || crate::math::abs(self.state[2]) > THETA_LIMIT;
        let truncated = !terminated && self.step_index >= HORIZON;
        self.done = terminated || truncated;
        StepResult { obs: self.state.to_vec(), reward: 1.0, terminated, truncated }
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec { obs_dim: 4, action_space: ActionSpace::Discrete { n: 2 }, horizon: HORIZON }
    }

    fn success_metric(&self) -> f64 {
        self.step_index as f64
    }
}
