//! Mountain-car with the classical constants. Observation: [position,
//! velocity]. Three discrete actions: push left, no push, push right.
//! Reward -1 per step until the goal position is reached; truncates at 200
//! steps.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Action, ActionSpace, Env, EnvSpec, StepResult};
use crate::math;
use crate::rng::{stream_rng, Stream};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const HORIZON: usize = 200;

#[derive(Debug, Clone)]
pub struct MountainCar {
    position: f64,
    velocity: f64,
    step_index: usize,
    done: bool,
}

impl MountainCar {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        MountainCar { position: 0.0, velocity: 0.0, step_index: 0, done: true }
    }
}

impl Env for MountainCar {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Env);
        self.position = rng.gen_range(-0.6..-0.4);
        self.velocity = 0.0;
        self.step_index = 0;
        self.done = false;
        alloc::vec![self.position, self.velocity]
    }

    fn step(&mut self, action: &Action) -> StepResult {
        assert!(!self.done, "step() called on a finished episode");
        let act = match action {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => panic!("mountaincar takes discrete actions"),
        };
        let push = act as f64 - 1.0; // -1, 0, +1
        self.velocity += push * FORCE - GRAVITY * math::cos(3.0 * self.position);
        self.velocity = math::clamp(self.velocity, -MAX_SPEED, MAX_SPEED);
        self.position += self.velocity;
        self.position = math::clamp(self.position, MIN_POSITION, MAX_POSITION);
        if self.position <= MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        self.step_index += 1;
        let terminated = self.position >= GOAL_POSITION;
        let truncated = !terminated && self.step_index >= HORIZON;
        self.done = terminated || truncated;
        StepResult {
            obs: alloc::vec![self.position, self.velocity],
            reward: -1.0,
            terminated,
            truncated,
        }
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec { obs_dim: 2, action_space: ActionSpace::Discrete { n: 3 }, horizon: HORIZON }
    }

    fn success_metric(&self) -> f64 {
        if self.position >= GOAL_POSITION {
            1.0
        } else {
            0.0
        }
    }
}
