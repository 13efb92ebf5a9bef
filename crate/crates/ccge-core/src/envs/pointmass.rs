//! 2-D double-integrator waypoint chase.
//!
//! Observation (8 values): [pos_x, pos_y, vel_x, vel_y, to_target_x,
//! to_target_y, targets_remaining, time_fraction]. Action: acceleration in
//! [-1, 1]^2. Per tick: vel <- (vel + a * DT) * (1 - DRAG); pos <- pos +
//! vel * DT. Four waypoints are sampled uniformly in [-5, 5]^2 per episode
//! and must be captured in order (within CAPTURE_RADIUS); the episode
//! terminates when all are captured, truncates at 500 steps.
//!
//! Rewards: the sparse variant pays -0.1 every step plus +100 on a capture
//! (summed, so a capture tick pays 99.9). The dense variant additionally
//! shapes with -0.05 * distance-to-target per step.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_action, Action, ActionSpace, Env, EnvSpec, StepResult};
use crate::math;
use crate::rng::{stream_rng, Stream};

pub const DT: f64 = 0.1;
pub const DRAG: f64 = 0.05;
pub const CAPTURE_RADIUS: f64 = 0.5;
pub const NUM_WAYPOINTS: usize = 4;
pub const FIELD_HALF_WIDTH: f64 = 5.0;
pub const HORIZON: usize = 500;
pub const STEP_PENALTY: f64 = -0.1;
pub const CAPTURE_REWARD: f64 = 100.0;
pub const DENSE_DISTANCE_WEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    Dense,
    Sparse,
}

/// Ordered waypoint sequence with a monotone capture index.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointTrack {
    targets: Vec<[f64; 2]>,
    capture_radius: f64,
    current: usize,
}

impl WaypointTrack {
    pub fn new(targets: Vec<[f64; 2]>, capture_radius: f64) -> Self {
        assert!(capture_radius > 0.0);
        WaypointTrack { targets, capture_radius, current: 0 }
    }

    pub fn current_target(&self) -> Option<[f64; 2]> {
        self.targets.get(self.current).copied()
    }

    pub fn captured(&self) -> usize {
        self.current
    }

    pub fn remaining(&self) -> usize {
        self.targets.len() - self.current
    }

    pub fn all_captured(&self) -> bool {
        self.current >= self.targets.len()
    }

    /// Advances the target index if `pos` is within the capture radius of the
    /// current target; returns whether a capture happened. The index never
    /// decreases.
    pub fn try_capture(&mut self, pos: [f64; 2]) -> bool {
        match self.current_target() {
            Some(t) => {
                let d = math::hypot(pos[0] - t[0], pos[1] - t[1]);
                if d <= self.capture_radius {
                    self.current += 1;
                    true
                } else {
                    false
                }
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointMass2D {
    mode: RewardMode,
    pos: [f64; 2],
    vel: [f64; 2],
    track: WaypointTrack,
    step_index: usize,
    done: bool,
    clamp_events: u64,
}

impl PointMass2D {
    pub fn new(mode: RewardMode) -> Self {
        PointMass2D {
            mode,
            pos: [0.0; 2],
            vel: [0.0; 2],
            track: WaypointTrack::new(Vec::new(), CAPTURE_RADIUS),
            step_index: 0,
            done: true,
            clamp_events: 0,
        }
    }

    fn obs(&self) -> Vec<f64> {
        let to_target = match self.track.current_target() {
            Some(t) => [t[0] - self.pos[0], t[1] - self.pos[1]],
            None => [0.0, 0.0],
        };
        alloc::vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            to_target[0],
            to_target[1],
            self.track.remaining() as f64,
            self.step_index as f64 / HORIZON as f64,
        ]
    }

    pub fn waypoints_captured(&self) -> usize {
        self.track.captured()
    }

    pub fn track(&self) -> &WaypointTrack {
        &self.track
    }
}

impl Env for PointMass2D {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Env);
        let mut targets = Vec::with_capacity(NUM_WAYPOINTS);
        for _ in 0..NUM_WAYPOINTS {
            targets.push([
                rng.gen_range(-FIELD_HALF_WIDTH..FIELD_HALF_WIDTH),
                rng.gen_range(-FIELD_HALF_WIDTH..FIELD_HALF_WIDTH),
            ]);
        }
        self.track = WaypointTrack::new(targets, CAPTURE_RADIUS);
        self.pos = [0.0; 2];
        self.vel = [0.0; 2];
        self.step_index = 0;
        self.done = false;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> StepResult {
        assert!(!self.done, "step() called on a finished episode");
        let mut a = match action {
            Action::Continuous(v) => {
                assert_eq!(v.len(), 2, "pointmass takes a 2-dim action");
                [v[0], v[1]]
            }
            Action::Discrete(_) => panic!("pointmass takes continuous actions"),
        };
        self.clamp_events += clamp_action(&mut a);

        for i in 0..2 {
            self.vel[i] = (self.vel[i] + a[i] * DT) * (1.0 - DRAG);
            self.pos[i] += self.vel[i] * DT;
        }
        self.step_index += 1;

        let dist_before_capture = self
            .track
            .current_target()
            .map(|t| math::hypot(self.pos[0] - t[0], self.pos[1] - t[1]));
        let captured = self.track.try_capture(self.pos);

        let mut reward = STEP_PENALTY;
        if captured {
            reward += CAPTURE_REWARD;
        }
        if self.mode == RewardMode::Dense {
            if let Some(d) = dist_before_capture {
                if !captured {
                    reward -= DENSE_DISTANCE_WEIGHT * d;
                }
            }
        }

        let terminated = self.track.all_captured();
        let truncated = !terminated && self.step_index >= HORIZON;
        self.done = terminated || truncated;
        StepResult { obs: self.obs(), reward, terminated, truncated }
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec { obs_dim: 8, action_space: ActionSpace::Continuous { dim: 2 }, horizon: HORIZON }
    }

    fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    fn success_metric(&self) -> f64 {
        self.track.captured() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_starts_at_origin_with_first_waypoint_active() {
        let mut env = PointMass2D::new(RewardMode::Sparse);
        let obs = env.reset(4);
        assert_eq!(&obs[0..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(obs[6], NUM_WAYPOINTS as f64);
        assert_eq!(obs[7], 0.0);
        assert_eq!(env.waypoints_captured(), 0);
    }

    #[test]
    fn sparse_step_without_capture_pays_step_penalty() {
        let mut env = PointMass2D::new(RewardMode::Sparse);
        env.reset(4);
        let r = env.step(&Action::Continuous(alloc::vec![0.0, 0.0]));
        assert_eq!(r.reward, -0.1);
    }

    #[test]
    fn sparse_capture_tick_pays_combined_reward() {
        let mut env = PointMass2D::new(RewardMode::Sparse);
        env.reset(4);
        // Teleport next to the first waypoint so any small step captures it.
        let t = env.track.current_target().unwrap();
        env.pos = [t[0] - 0.01, t[1] - 0.01];
        env.vel = [0.0, 0.0];
        let r = env.step(&Action::Continuous(alloc::vec![0.0, 0.0]));
        assert!((r.reward - 99.9).abs() < 1e-12, "reward {}", r.reward);
        assert_eq!(env.waypoints_captured(), 1);
    }

    #[test]
    fn sparse_return_identity_holds() {
        // Episodic return == 100 * captures - 0.1 * steps, exactly.
        let mut env = PointMass2D::new(RewardMode::Sparse);
        let mut obs = env.reset(7);
        let mut ret = 0.0;
        let mut steps = 0;
        loop {
            // crude proportional chase to make some captures happen
            let a =
                alloc::vec![math::clamp(obs[4], -1.0, 1.0), math::clamp(obs[5], -1.0, 1.0)];
            let r = env.step(&Action::Continuous(a));
            ret += r.reward;
            steps += 1;
            obs = r.obs;
            if r.terminated || r.truncated {
                break;
            }
        }
        let expected = 100.0 * env.waypoints_captured() as f64 - 0.1 * steps as f64;
        assert!((ret - expected).abs() < 1e-9, "ret {ret} expected {expected}");
    }

    #[test]
    fn waypoint_index_is_monotone() {
        let mut track = WaypointTrack::new(alloc::vec![[1.0, 0.0], [2.0, 0.0]], 0.5);
        assert!(!track.try_capture([0.0, 0.0]));
        assert_eq!(track.captured(), 0);
        assert!(track.try_capture([1.1, 0.0]));
        assert_eq!(track.captured(), 1);
        assert!(!track.try_capture([1.1, 0.0])); // second target not in range
        assert!(track.try_capture([2.0, 0.1]));
        assert!(track.all_captured());
        assert!(!track.try_capture([2.0, 0.0])); // nothing left to capture
        assert_eq!(track.captured(), 2);
    }

    #[test]
    fn trajectories_bitwise_deterministic() {
        let run = || {
            let mut env = PointMass2D::new(RewardMode::Sparse);
            let mut trace = Vec::new();
            env.reset(99);
            for i in 0..100 {
                let a = alloc::vec![((i * 7) % 13) as f64 / 13.0 - 0.5, ((i * 3) % 11) as f64 / 11.0 - 0.5];
                let r = env.step(&Action::Continuous(a));
                trace.push((r.obs.clone(), r.reward.to_bits()));
                if r.terminated || r.truncated {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
