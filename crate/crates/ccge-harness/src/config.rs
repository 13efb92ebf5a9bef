//! Run configuration: a flat, human-readable `key = value` file format.
//!
//! Every key is validated before any training starts; unknown keys are
//! rejected so typos never silently fall back to defaults. Lines starting
//! with `#` and blank lines are ignored.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use ccge_core::ccge::CcgeConfig;
use ccge_core::dqn::DqnConfig;
use ccge_core::envs::{make_env, ActionSpace, ENV_NAMES};
use ccge_core::replay::BufferMode;
use ccge_core::sac::SacConfig;
use ccge_core::uncertainty::UncertaintyMode;

/// Training algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Sac,
    Ccge,
    Jsrl,
    DqnStudy,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::Ccge => "ccge",
            Algorithm::Jsrl => "jsrl",
            Algorithm::DqnStudy => "dqn-study",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "sac" => Ok(Algorithm::Sac),
            "ccge" => Ok(Algorithm::Ccge),
            "jsrl" => Ok(Algorithm::Jsrl),
            "dqn-study" => Ok(Algorithm::DqnStudy),
            other => bail!("unknown algorithm '{other}' (known: sac, ccge, jsrl, dqn-study)"),
        }
    }
}

/// How the oracle policy is obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleSpec {
    None,
    /// Scripted PD waypoint controller.
    Scripted,
    /// Frozen pretrained actor loaded from a checkpoint file.
    Checkpoint(String),
    /// Starts from a checkpoint and is overwritten by the learner whenever
    /// the learner's evaluation score strictly exceeds the oracle's.
    Bootstrap(String),
}

impl OracleSpec {
    pub fn as_config_value(&self) -> String {
        match self {
            OracleSpec::None => "none".into(),
            OracleSpec::Scripted => "scripted".into(),
            OracleSpec::Checkpoint(p) => format!("checkpoint:{p}"),
            OracleSpec::Bootstrap(p) => format!("bootstrap:{p}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s == "none" {
            Ok(OracleSpec::None)
        } else if s == "scripted" {
            Ok(OracleSpec::Scripted)
        } else if let Some(path) = s.strip_prefix("checkpoint:") {
            Ok(OracleSpec::Checkpoint(path.to_string()))
        } else if let Some(path) = s.strip_prefix("bootstrap:") {
            Ok(OracleSpec::Bootstrap(path.to_string()))
        } else {
            bail!("unknown oracle spec '{s}' (expected none | scripted | checkpoint:<path> | bootstrap:<path>)")
        }
    }
}

/// Full description of one experiment; the (config, seed) pair determines
/// every byte of the run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_name: String,
    pub env: String,
    pub algorithm: Algorithm,
    pub uncertainty_mode: UncertaintyMode,
    pub oracle: OracleSpec,
    pub lambda: f64,
    pub guidance_enabled: bool,
    pub supervision_enabled: bool,
    pub buffer_capacity: usize,
    pub buffer_gdm: bool,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub warmup_steps: u64,
    /// Gradient updates happen every `update_every` environment steps.
    pub update_every: u64,
    pub eval_episodes: usize,
    pub eval_frequency: u64,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub n_critics: usize,
    pub grad_clip: Option<f64>,
    /// JSRL-Random: maximum oracle roll-in horizon per episode.
    pub jsrl_max_h: usize,
    /// DQN exploration rate.
    pub eps_explore: f64,
    /// DQN: gradient steps between hard target copies.
    pub target_update_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_name: "run".into(),
            env: "pendulum".into(),
            algorithm: Algorithm::Sac,
            uncertainty_mode: UncertaintyMode::Implicit,
            oracle: OracleSpec::None,
            lambda: 1.0,
            guidance_enabled: true,
            supervision_enabled: true,
            buffer_capacity: 100_000,
            buffer_gdm: false,
            seeds: vec![0],
            total_steps: 100_000,
            warmup_steps: 5_000,
            update_every: 1,
            eval_episodes: 10,
            eval_frequency: 10_000,
            hidden: vec![256, 256],
            lr: 4e-4,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            n_critics: 2,
            grad_clip: None,
            jsrl_max_h: 100,
            eps_explore: 0.1,
            target_update_every: 1000,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("key '{key}': expected true or false, got '{v}'"),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("key '{key}': bad element '{s}': {e}")))
        .collect()
}

impl RunConfig {
    /// Parses the flat `key = value` format. Unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value', got '{line}'", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value).with_context(|| format!("line {}", lineno + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key=value assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "run_name" => self.run_name = value.to_string(),
            "env" => self.env = value.to_string(),
            "algorithm" => self.algorithm = Algorithm::parse(value)?,
            "uncertainty_mode" => {
                self.uncertainty_mode = match value {
                    "implicit" => UncertaintyMode::Implicit,
                    "explicit" => UncertaintyMode::Explicit,
                    _ => bail!("key 'uncertainty_mode': expected implicit or explicit, got '{value}'"),
                }
            }
            "oracle" => self.oracle = OracleSpec::parse(value)?,
            "lambda" => self.lambda = value.parse().map_err(|e| anyhow!("key 'lambda': {e}"))?,
            "guidance_enabled" => self.guidance_enabled = parse_bool(key, value)?,
            "supervision_enabled" => self.supervision_enabled = parse_bool(key, value)?,
            "buffer_capacity" => {
                self.buffer_capacity = value.parse().map_err(|e| anyhow!("key 'buffer_capacity': {e}"))?
            }
            "buffer_mode" => {
                self.buffer_gdm = match value {
                    "fifo" => false,
                    "gdm" => true,
                    _ => bail!("key 'buffer_mode': expected fifo or gdm, got '{value}'"),
                }
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "total_steps" => self.total_steps = value.parse().map_err(|e| anyhow!("key 'total_steps': {e}"))?,
            "warmup_steps" => {
                self.warmup_steps = value.parse().map_err(|e| anyhow!("key 'warmup_steps': {e}"))?
            }
            "update_every" => {
                self.update_every = value.parse().map_err(|e| anyhow!("key 'update_every': {e}"))?
            }
            "eval_episodes" => {
                self.eval_episodes = value.parse().map_err(|e| anyhow!("key 'eval_episodes': {e}"))?
            }
            "eval_frequency" => {
                self.eval_frequency = value.parse().map_err(|e| anyhow!("key 'eval_frequency': {e}"))?
            }
            "hidden" => self.hidden = parse_list(key, value)?,
            "lr" => self.lr = value.parse().map_err(|e| anyhow!("key 'lr': {e}"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|e| anyhow!("key 'batch_size': {e}"))?,
            "gamma" => self.gamma = value.parse().map_err(|e| anyhow!("key 'gamma': {e}"))?,
            "tau" => self.tau = value.parse().map_err(|e| anyhow!("key 'tau': {e}"))?,
            "n_critics" => self.n_critics = value.parse().map_err(|e| anyhow!("key 'n_critics': {e}"))?,
            "grad_clip" => {
                self.grad_clip = if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|e| anyhow!("key 'grad_clip': {e}"))?)
                }
            }
            "jsrl_max_h" => self.jsrl_max_h = value.parse().map_err(|e| anyhow!("key 'jsrl_max_h': {e}"))?,
            "eps_explore" => {
                self.eps_explore = value.parse().map_err(|e| anyhow!("key 'eps_explore': {e}"))?
            }
            "target_update_every" => {
                self.target_update_every =
                    value.parse().map_err(|e| anyhow!("key 'target_update_every': {e}"))?
            }
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    /// Checks every field before any training starts.
    pub fn validate(&self) -> Result<()> {
        if !ENV_NAMES.contains(&self.env.as_str()) {
            bail!("unknown environment '{}' (known: {ENV_NAMES:?})", self.env);
        }
        let env = make_env(&self.env).map_err(|e| anyhow!("{e}"))?;
        let discrete = matches!(env.spec().action_space, ActionSpace::Discrete { .. });
        match self.algorithm {
            Algorithm::DqnStudy => {
                if !discrete {
                    bail!("dqn-study requires a discrete-action environment, '{}' is continuous", self.env);
                }
            }
            _ => {
                if discrete {
                    bail!(
                        "algorithm '{}' requires a continuous-action environment, '{}' is discrete",
                        self.algorithm.as_str(),
                        self.env
                    );
                }
            }
        }
        if matches!(self.algorithm, Algorithm::Ccge | Algorithm::Jsrl)
            && self.oracle == OracleSpec::None
        {
            bail!("algorithm '{}' requires an oracle", self.algorithm.as_str());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            bail!("lambda must be finite and >= 0, got {}", self.lambda);
        }
        if self.buffer_capacity == 0 {
            bail!("buffer_capacity must be positive");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed required");
        }
        {
            let mut sorted = self.seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.seeds.len() {
                bail!("duplicate seeds in seed list");
            }
        }
        if self.update_every == 0 {
            bail!("update_every must be positive");
        }
        if self.eval_episodes == 0 {
            bail!("eval_episodes must be positive");
        }
        if self.eval_frequency == 0 {
            bail!("eval_frequency must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            bail!("hidden layer sizes must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            bail!("lr must be finite and positive, got {}", self.lr);
        }
        if self.batch_size == 0 {
            bail!("batch_size must be positive");
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            bail!("gamma must be in (0, 1), got {}", self.gamma);
        }
        if !(0.0..=1.0).contains(&self.tau) {
            bail!("tau must be in [0, 1], got {}", self.tau);
        }
        if self.algorithm != Algorithm::DqnStudy && self.n_critics < 2 {
            bail!("n_critics must be >= 2, got {}", self.n_critics);
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                bail!("grad_clip must be finite and positive or 'none'");
            }
        }
        if !(0.0..=1.0).contains(&self.eps_explore) {
            bail!("eps_explore must be in [0, 1], got {}", self.eps_explore);
        }
        if self.algorithm == Algorithm::DqnStudy && self.target_update_every == 0 {
            bail!("target_update_every must be positive");
        }
        Ok(())
    }

    /// Canonical text form: every key, fixed order. Parsing it back yields
    /// an equal config, and the run manifest hashes exactly this text.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("run_name", self.run_name.clone());
        kv("env", self.env.clone());
        kv("algorithm", self.algorithm.as_str().into());
        kv(
            "uncertainty_mode",
            match self.uncertainty_mode {
                UncertaintyMode::Implicit => "implicit".into(),
                UncertaintyMode::Explicit => "explicit".into(),
            },
        );
        kv("oracle", self.oracle.as_config_value());
        kv("lambda", format!("{}", self.lambda));
        kv("guidance_enabled", format!("{}", self.guidance_enabled));
        kv("supervision_enabled", format!("{}", self.supervision_enabled));
        kv("buffer_capacity", format!("{}", self.buffer_capacity));
        kv("buffer_mode", if self.buffer_gdm { "gdm".into() } else { "fifo".into() });
        kv("seeds", self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        kv("total_steps", format!("{}", self.total_steps));
        kv("warmup_steps", format!("{}", self.warmup_steps));
        kv("update_every", format!("{}", self.update_every));
        kv("eval_episodes", format!("{}", self.eval_episodes));
        kv("eval_frequency", format!("{}", self.eval_frequency));
        kv("hidden", self.hidden.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        kv("lr", format!("{}", self.lr));
        kv("batch_size", format!("{}", self.batch_size));
        kv("gamma", format!("{}", self.gamma));
        kv("tau", format!("{}", self.tau));
        kv("n_critics", format!("{}", self.n_critics));
        kv("grad_clip", self.grad_clip.map_or("none".into(), |c| format!("{c}")));
        kv("jsrl_max_h", format!("{}", self.jsrl_max_h));
        kv("eps_explore", format!("{}", self.eps_explore));
        kv("target_update_every", format!("{}", self.target_update_every));
        out
    }

    /// FNV-1a 64-bit hash of the canonical text; recorded in manifests so a
    /// run directory can be matched back to the exact configuration.
    pub fn hash(&self) -> String {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        for b in self.canonical_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        format!("{h:016x}")
    }

    /// Dimensions of the configured environment.
    pub fn env_dims(&self) -> Result<(usize, ActionSpace)> {
        let env = make_env(&self.env).map_err(|e| anyhow!("{e}"))?;
        let spec = env.spec();
        Ok((spec.obs_dim, spec.action_space))
    }

    /// SAC agent configuration for this run (continuous algorithms only).
    pub fn sac_config(&self) -> Result<SacConfig> {
        let (obs_dim, space) = self.env_dims()?;
        let act_dim = match space {
            ActionSpace::Continuous { dim } => dim,
            ActionSpace::Discrete { .. } => bail!("SAC requires a continuous action space"),
        };
        let mut cfg = SacConfig::new(obs_dim, act_dim);
        cfg.hidden = self.hidden.clone();
        cfg.gamma = self.gamma;
        cfg.tau = self.tau;
        cfg.optimizer.lr = self.lr;
        cfg.batch_size = self.batch_size;
        cfg.n_critics = self.n_critics;
        cfg.explicit_uncertainty = self.uncertainty_mode == UncertaintyMode::Explicit;
        cfg.grad_clip = self.grad_clip;
        cfg.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(cfg)
    }

    /// CCGE configuration for this run.
    pub fn ccge_config(&self) -> CcgeConfig {
        let mut cfg = CcgeConfig::new(self.lambda, self.uncertainty_mode);
        cfg.guidance_enabled = self.guidance_enabled;
        cfg.supervision_enabled = self.supervision_enabled;
        cfg
    }

    /// DQN configuration for this run (discrete environments only).
    pub fn dqn_config(&self) -> Result<DqnConfig> {
        let (obs_dim, space) = self.env_dims()?;
        let n_actions = match space {
            ActionSpace::Discrete { n } => n,
            ActionSpace::Continuous { .. } => bail!("DQN requires a discrete action space"),
        };
        let mut cfg = DqnConfig::new(obs_dim, n_actions);
        cfg.hidden = self.hidden.clone();
        cfg.gamma = self.gamma;
        cfg.optimizer.lr = self.lr;
        cfg.batch_size = self.batch_size;
        cfg.eps_explore = self.eps_explore;
        cfg.target_update_every = self.target_update_every;
        cfg.grad_clip = self.grad_clip;
        cfg.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(cfg)
    }

    pub fn buffer_mode(&self) -> BufferMode {
        if self.buffer_gdm {
            BufferMode::Gdm
        } else {
            BufferMode::Fifo
        }
    }
}
