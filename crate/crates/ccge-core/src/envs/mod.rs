//! Desk-scale environments with exact, documented dynamics.
//!
//! All dynamics are pure functions of (state, action, per-episode RNG
//! stream): two runs with equal seeds and action sequences produce identical
//! trajectories bitwise. Continuous actions are declared in [-1, 1] per
//! component and scaled internally; out-of-bounds actions are clamped and
//! counted, never a crash.

mod cartpole;
mod mountaincar;
mod pendulum;
mod pointmass;

pub use cartpole::CartPole;
pub use mountaincar::MountainCar;
pub use pendulum::Pendulum;
pub use pointmass::{PointMass2D, RewardMode};

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;

/// Action space of an environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    /// Each component in [-1, 1].
    Continuous { dim: usize },
    Discrete { n: usize },
}

/// Static environment metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub horizon: usize,
}

/// An action: continuous vector or discrete index.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Continuous(Vec<f64>),
    Discrete(usize),
}

/// Outcome of one environment tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Genuine MDP termination (pole fell, all waypoints captured, ...).
    pub terminated: bool,
    /// Horizon reached; the episode ends but bootstrapped targets still apply.
    pub truncated: bool,
}

pub trait Env {
    /// Deterministic initial state for the given seed; resets the step index.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> StepResult;
    fn spec(&self) -> EnvSpec;
    /// Number of out-of-bounds actions clamped since construction.
    fn clamp_events(&self) -> u64 {
        0
    }
    /// Env-specific success measure for evaluation logs (waypoints captured,
    /// goal reached, ...); 0 where no natural notion exists.
    fn success_metric(&self) -> f64 {
        0.0
    }
}

/// Stable environment identifiers used by the CLI and config files.
pub const ENV_NAMES: [&str; 5] = ["cartpole", "mountaincar", "pendulum", "pointmass-dense", "pointmass-sparse"];

pub fn make_env(name: &str) -> Result<Box<dyn Env>, CoreError> {
    match name {
        "cartpole" => Ok(Box::new(CartPole::new())),
        "mountaincar" => Ok(Box::new(MountainCar::new())),
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "pointmass-dense" => Ok(Box::new(PointMass2D::new(RewardMode::Dense))),
        "pointmass-sparse" => Ok(Box::new(PointMass2D::new(RewardMode::Sparse))),
        other => Err(CoreError::Config(format!(
            "unknown environment '{other}' (known: {ENV_NAMES:?})"
        ))),
    }
}

/// Clamps each component of `action` into [-1, 1]; returns how many
/// components were out of bounds.
pub(crate) fn clamp_action(action: &mut [f64]) -> u64 {
    let mut clamped = 0;
    for a in action.iter_mut() {
        if *a < -1.0 || *a > 1.0 || !a.is_finite() {
            *a = crate::math::clamp(if a.is_finite() { *a } else { 0.0 }, -1.0, 1.0);
            clamped += 1;
        }
    }
    clamped
}
