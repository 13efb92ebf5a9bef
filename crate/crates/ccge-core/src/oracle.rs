//! Oracle policies: the scripted PD waypoint controller, frozen checkpoint
//! policies, the bootstrapped oracle (learner copy on strict evaluation
//! improvement), and the JSRL-Random roll-in horizon.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::sac::GaussianActor;

/// Default PD gains on position error for the waypoint oracle;
/// deliberately soft so the controller only partially solves the task
/// (about 2.3 of 4 waypoints on the point-mass track within its horizon).
pub const PD_KP: f64 = 0.12;
pub const PD_KD: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ScriptedPd,
    Checkpoint,
    Bootstrap,
}

/// A state -> action suggester consulted by the learner.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    kind: OracleKind,
    kp: f64,
    kd: f64,
    net: Option<GaussianActor>,
    score: Option<f64>,
    /// Whether `maybe_bootstrap` may overwrite this oracle with a learner copy.
    bootstrappable: bool,
    obs_dim: usize,
    act_dim: usize,
}

impl OraclePolicy {
    /// Scripted PD controller over the point-mass observation layout
    /// [px, py, vx, vy, to_tx, to_ty, ...]: a = Kp * to_target - Kd * velocity,
    /// clamped to the unit box.
    pub fn scripted_pd(obs_dim: usize, act_dim: usize) -> Self {
        OraclePolicy {
            kind: OracleKind::ScriptedPd,
            kp: PD_KP,
            kd: PD_KD,
            net: None,
            score: None,
            bootstrappable: false,
            obs_dim,
            act_dim,
        }
    }

    pub fn scripted_pd_with_gains(obs_dim: usize, act_dim: usize, kp: f64, kd: f64) -> Self {
        OraclePolicy { kp, kd, ..OraclePolicy::scripted_pd(obs_dim, act_dim) }
    }

    /// Frozen network oracle acting at the policy mean.
    pub fn checkpoint(actor: GaussianActor, obs_dim: usize, score: Option<f64>) -> Self {
        let act_dim = actor.act_dim();
        OraclePolicy {
            kind: OracleKind::Checkpoint,
            kp: 0.0,
            kd: 0.0,
            net: Some(actor),
            score,
            bootstrappable: false,
            obs_dim,
            act_dim,
        }
    }

    /// Marks the oracle as replaceable by learner copies.
    pub fn with_bootstrap(mut self) -> Self {
        self.bootstrappable = true;
        if self.kind == OracleKind::Checkpoint {
            self.kind = OracleKind::Bootstrap;
        }
        self
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }

    pub fn set_score(&mut self, score: f64) {
        self.score = Some(score);
    }

    pub fn is_bootstrappable(&self) -> bool {
        self.bootstrappable
    }

    /// Suggested action at `obs`. Deterministic: scripted control law or the
    /// stored network's mean action.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>, CoreError> {
        if obs.len() != self.obs_dim {
            return Err(CoreError::Shape(alloc::format!(
                "oracle expected observation of length {}, got {}",
                self.obs_dim,
                obs.len()
            )));
        }
        match &self.net {
            Some(actor) => actor.mean_action(obs),
            None => {
                if obs.len() < 2 * self.act_dim + 2 {
                    return Err(CoreError::Shape(
                        "observation too short for the PD waypoint layout".into(),
                    ));
                }
                let mut a = Vec::with_capacity(self.act_dim);
                for i in 0..self.act_dim {
                    let vel = obs[self.act_dim + i];
                    let to_target = obs[2 * self.act_dim + i];
                    a.push(math::clamp(self.kp * to_target - self.kd * vel, -1.0, 1.0));
                }
                Ok(a)
            }
        }
    }

    /// Copies the learner's actor into the oracle when the learner's
    /// evaluation score strictly exceeds the oracle's stored score (an absent
    /// score always loses). Returns whether a copy happened.
    pub fn maybe_bootstrap(
        &mut self,
        learner_actor: &GaussianActor,
        learner_eval: f64,
    ) -> Result<bool, CoreError> {
        if !self.bootstrappable {
            return Err(CoreError::Oracle(
                "bootstrap requested on an oracle configured non-bootstrappable".into(),
            ));
        }
        let surpassed = match self.score {
            Some(s) => learner_eval > s,
            None => true,
        };
        if surpassed {
            self.net = Some(learner_actor.clone());
            self.score = Some(learner_eval);
            if self.kind == OracleKind::ScriptedPd {
                self.kind = OracleKind::Checkpoint;
            }
        }
        Ok(surpassed)
    }
}

/// JSRL-Random roll-in horizon: uniform on {0, ..., max_h}. The oracle acts
/// for the first h steps of the episode, the learner thereafter.
pub fn jsrl_rollin_horizon<R: Rng + ?Sized>(rng: &mut R, max_h: usize) -> usize {
    rng.gen_range(0..=max_h)
}
