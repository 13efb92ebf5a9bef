//! Seeded training runs: rollout → store → update, periodic frozen-policy
//! evaluation, metrics CSV, checkpoints, and a reproducibility manifest.
//!
//! Everything written to `metrics.csv`, `manifest.json`, and
//! `checkpoint.json` is a pure function of (config, seed). Wall-clock timing
//! goes to a separate `timing.txt` so the determinism contract holds on the
//! primary outputs.

use std::collections::VecDeque;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::Rng;
use serde::Serialize;

use ccge_core::ccge::{ccge_update, select_rollout_action, GuidanceStats};
use ccge_core::dqn::DqnAgent;
use ccge_core::envs::{make_env, Action, ActionSpace};
use ccge_core::error::CoreError;
use ccge_core::nn::Checkpoint;
use ccge_core::oracle::{jsrl_rollin_horizon, OraclePolicy};
use ccge_core::replay::{ReplayBuffer, Transition};
use ccge_core::rng::{stream_rng, Stream, RNG_ALGORITHM};
use ccge_core::sac::{GaussianActor, SacAgent};
use ccge_core::uncertainty::mean_epsilon;

use crate::config::{Algorithm, OracleSpec, RunConfig};

/// One row of `metrics.csv`. Wall-clock is deliberately absent: it goes to
/// `timing.txt` so the CSV stays bitwise-deterministic.
#[derive(Debug, Clone)]
pub struct MetricRecord {
    pub run_id: String,
    pub seed: u64,
    pub env_step: u64,
    pub eval_mean_return: f64,
    pub eval_success: f64,
    pub guided_ratio: f64,
    pub mean_k: f64,
    pub mean_uncertainty: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

pub const METRICS_HEADER: &str = "run_id,seed,env_step,eval_mean_return,eval_success,guided_ratio,mean_k,mean_uncertainty,critic_loss,actor_loss,alpha_loss,alpha";

impl MetricRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.env_step,
            self.eval_mean_return,
            self.eval_success,
            self.guided_ratio,
            self.mean_k,
            self.mean_uncertainty,
            self.critic_loss,
            self.actor_loss,
            self.alpha_loss,
            self.alpha
        )
    }
}

/// Reproducibility manifest written next to the metrics.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run_id: &'a str,
    seed: u64,
    config_hash: String,
    rng_algorithm: &'static str,
    code_version: &'static str,
    env: &'a str,
    algorithm: &'static str,
    total_steps: u64,
    config_text: String,
}

/// Rolling diagnostic state dumped on a non-finite abort.
#[derive(Debug, Clone, Serialize)]
struct StepDiagnostic {
    env_step: u64,
    action: Vec<f64>,
    reward: f64,
    terminal: bool,
    critic_loss: f64,
    actor_loss: f64,
    alpha: f64,
}

fn push_diag(diags: &mut VecDeque<StepDiagnostic>, d: StepDiagnostic) {
    if diags.len() == 50 {
        diags.pop_front();
    }
    diags.push_back(d);
}

fn write_dump(dir: &Path, diags: &VecDeque<StepDiagnostic>, cause: &str) -> Result<()> {
    #[derive(Serialize)]
    struct Dump<'a> {
        cause: &'a str,
        last_steps: Vec<&'a StepDiagnostic>,
    }
    let dump = Dump { cause, last_steps: diags.iter().collect() };
    fs::write(dir.join("dump.json"), serde_json::to_string_pretty(&dump)?)?;
    Ok(())
}

/// Builds the oracle named by the config, or None for plain SAC/DQN runs.
pub fn build_oracle(spec: &OracleSpec, obs_dim: usize, act_dim: usize) -> Result<Option<OraclePolicy>> {
    match spec {
        OracleSpec::None => Ok(None),
        OracleSpec::Scripted => Ok(Some(OraclePolicy::scripted_pd(obs_dim, act_dim))),
        OracleSpec::Checkpoint(path) => {
            let actor = load_actor_checkpoint(Path::new(path))?;
            Ok(Some(OraclePolicy::checkpoint(actor, obs_dim, None)))
        }
        OracleSpec::Bootstrap(path) => {
            let oracle = if path.is_empty() || path == "scripted" {
                OraclePolicy::scripted_pd(obs_dim, act_dim)
            } else {
                let actor = load_actor_checkpoint(Path::new(path))?;
                OraclePolicy::checkpoint(actor, obs_dim, None)
            };
            Ok(Some(oracle.with_bootstrap()))
        }
    }
}

/// Loads a saved actor (net "actor", scalars for the log-std bounds).
pub fn load_actor_checkpoint(path: &Path) -> Result<GaussianActor> {
    let text = fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let ckpt = Checkpoint::from_json(&text).map_err(|e| anyhow!("{e}"))?;
    actor_from_checkpoint(&ckpt)
}

pub fn actor_from_checkpoint(ckpt: &Checkpoint) -> Result<GaussianActor> {
    let net = ckpt.net("actor").map_err(|e| anyhow!("{e}"))?;
    let act_dim = net.output_dim() / 2;
    let log_std_min = *ckpt.scalars.get("log_std_min").unwrap_or(&-20.0);
    let log_std_max = *ckpt.scalars.get("log_std_max").unwrap_or(&2.0);
    GaussianActor::from_net(net, act_dim, log_std_min, log_std_max).map_err(|e| anyhow!("{e}"))
}

/// Serializes a full SAC agent (actor, critics, targets, temperature).
pub fn sac_checkpoint(agent: &SacAgent) -> Checkpoint {
    let mut ckpt = Checkpoint::new();
    ckpt.insert_net("actor", agent.actor.net());
    for (i, m) in agent.critics.members().iter().enumerate() {
        ckpt.insert_net(&format!("critic{i}"), m);
    }
    for (i, t) in agent.critics.targets().iter().enumerate() {
        ckpt.insert_net(&format!("target{i}"), t);
    }
    ckpt.scalars.insert("log_alpha".into(), agent.log_alpha());
    ckpt.scalars.insert("log_std_min".into(), agent.cfg.log_std_min);
    ckpt.scalars.insert("log_std_max".into(), agent.cfg.log_std_max);
    ckpt
}

/// Evaluation of a frozen policy: deterministic mean action, no exploration
/// noise, no oracle override. Returns (mean return, mean success metric,
/// initial observation of every episode).
pub fn evaluate_actor(
    actor: &GaussianActor,
    env_name: &str,
    episodes: usize,
    eval_rng: &mut impl Rng,
) -> Result<(f64, f64, Vec<Vec<f64>>)> {
    let mut env = make_env(env_name).map_err(|e| anyhow!("{e}"))?;
    let mut total_return = 0.0;
    let mut total_success = 0.0;
    let mut init_states = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(eval_rng.gen());
        init_states.push(obs.clone());
        let mut ep_return = 0.0;
        loop {
            let a = actor.mean_action(&obs).map_err(|e| anyhow!("{e}"))?;
            let r = env.step(&Action::Continuous(a));
            ep_return += r.reward;
            obs = r.obs;
            if r.terminated || r.truncated {
                break;
            }
        }
        total_return += ep_return;
        total_success += env.success_metric();
    }
    let n = episodes as f64;
    Ok((total_return / n, total_success / n, init_states))
}

/// Greedy evaluation of a DQN agent.
pub fn evaluate_dqn(
    agent: &DqnAgent,
    env_name: &str,
    episodes: usize,
    eval_rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let mut env = make_env(env_name).map_err(|e| anyhow!("{e}"))?;
    let mut total_return = 0.0;
    let mut total_success = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset(eval_rng.gen());
        let mut ep_return = 0.0;
        loop {
            let a = agent.act(&obs, eval_rng, 0.0).map_err(|e| anyhow!("{e}"))?;
            let r = env.step(&Action::Discrete(a));
            ep_return += r.reward;
            obs = r.obs;
            if r.terminated || r.truncated {
                break;
            }
        }
        total_return += ep_return;
        total_success += env.success_metric();
    }
    let n = episodes as f64;
    Ok((total_return / n, total_success / n))
}

/// Runs every seed in the config (optionally restricted to one), spreading
/// seeds over at most `jobs` threads. Returns the run directories.
pub fn run_all(config: &RunConfig, out_dir: &Path, only_seed: Option<u64>, jobs: usize) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let seeds: Vec<u64> = match only_seed {
        Some(s) => vec![s],
        None => config.seeds.clone(),
    };
    let jobs = jobs.max(1);
    let mut dirs = vec![PathBuf::new(); seeds.len()];
    for chunk_start in (0..seeds.len()).step_by(jobs) {
        let chunk = &seeds[chunk_start..(chunk_start + jobs).min(seeds.len())];
        let handles: Vec<_> = chunk
            .iter()
            .map(|&seed| {
                let cfg = config.clone();
                let out = out_dir.to_path_buf();
                std::thread::spawn(move || run(&cfg, seed, &out))
            })
            .collect();
        for (i, h) in handles.into_iter().enumerate() {
            dirs[chunk_start + i] = h.join().map_err(|_| anyhow!("run thread panicked"))??;
        }
    }
    Ok(dirs)
}

/// Executes one (config, seed) run and writes its directory:
/// `metrics.csv`, `manifest.json`, `checkpoint.json`, `timing.txt`.
pub fn run(config: &RunConfig, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    config.validate()?;
    let started = Instant::now();
    let dir = out_dir.join(format!("{}-seed{}", config.run_name, seed));
    fs::create_dir_all(&dir)?;

    let manifest = Manifest {
        run_id: &config.run_name,
        seed,
        config_hash: config.hash(),
        rng_algorithm: RNG_ALGORITHM,
        code_version: env!("CARGO_PKG_VERSION"),
        env: &config.env,
        algorithm: config.algorithm.as_str(),
        total_steps: config.total_steps,
        config_text: config.canonical_text(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let records = match config.algorithm {
        Algorithm::DqnStudy => train_dqn(config, seed, &dir)?,
        _ => train_continuous(config, seed, &dir)?,
    };

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    fs::write(dir.join("metrics.csv"), csv)?;

    let mut timing = fs::File::create(dir.join("timing.txt"))?;
    writeln!(timing, "wall_clock_seconds = {:.3}", started.elapsed().as_secs_f64())?;
    Ok(dir)
}

/// Interval accumulators between two evaluation points.
#[derive(Default)]
struct IntervalStats {
    guidance: GuidanceStats,
    k_sum: f64,
    k_count: u64,
    critic_loss_sum: f64,
    actor_loss_sum: f64,
    alpha_loss_sum: f64,
    updates: u64,
    last_alpha: f64,
}

impl IntervalStats {
    fn mean_or(&self, sum: f64, zero: f64) -> f64 {
        if self.updates == 0 {
            zero
        } else {
            sum / self.updates as f64
        }
    }
}

fn train_continuous(config: &RunConfig, seed: u64, dir: &Path) -> Result<Vec<MetricRecord>> {
    let sac_cfg = config.sac_config()?;
    let obs_dim = sac_cfg.obs_dim;
    let act_dim = sac_cfg.act_dim;
    let ccge_cfg = config.ccge_config();

    let mut env_rng = stream_rng(seed, Stream::Env);
    let mut actor_rng = stream_rng(seed, Stream::Actor);
    let mut buffer_rng = stream_rng(seed, Stream::Buffer);
    let mut warmup_rng = stream_rng(seed, Stream::Warmup);
    let mut eval_rng = stream_rng(seed, Stream::Eval);
    let mut bootstrap_rng = stream_rng(seed, Stream::Bootstrap);
    let mut rollin_rng = stream_rng(seed, Stream::RollIn);

    let mut agent = SacAgent::new(sac_cfg, &mut bootstrap_rng).map_err(|e| anyhow!("{e}"))?;
    let mut oracle = build_oracle(&config.oracle, obs_dim, act_dim)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, config.buffer_mode(), obs_dim, act_dim)
        .map_err(|e| anyhow!("{e}"))?;

    let mut env = make_env(&config.env).map_err(|e| anyhow!("{e}"))?;
    let mut obs = env.reset(env_rng.gen());
    let mut episode_step: usize = 0;
    let mut rollin_h = if config.algorithm == Algorithm::Jsrl {
        jsrl_rollin_horizon(&mut rollin_rng, config.jsrl_max_h)
    } else {
        0
    };

    let mut interval = IntervalStats { last_alpha: agent.alpha(), ..Default::default() };
    let mut records = Vec::new();
    let mut diags: VecDeque<StepDiagnostic> = VecDeque::with_capacity(50);

    for step in 1..=config.total_steps {
        // Oracle suggestion at the current state; stored with the
        // transition so updates can recompute k later.
        let oracle_a: Vec<f64> = match &oracle {
            Some(o) => o.act(&obs).map_err(|e| anyhow!("{e}"))?,
            None => Vec::new(),
        };

        let action: Vec<f64> = if step <= config.warmup_steps {
            (0..act_dim).map(|_| warmup_rng.gen_range(-1.0..=1.0)).collect()
        } else if config.algorithm == Algorithm::Jsrl && episode_step < rollin_h {
            oracle_a.clone()
        } else if config.algorithm == Algorithm::Ccge {
            let choice = select_rollout_action(&ccge_cfg, &agent, &obs, &oracle_a, &mut actor_rng)
                .map_err(|e| anyhow!("{e}"))?;
            interval.guidance.record(choice.used_oracle);
            interval.k_sum += choice.k;
            interval.k_count += 1;
            choice.action
        } else {
            agent.actor.sample(&obs, &mut actor_rng).map_err(|e| anyhow!("{e}"))?.action
        };

        let result = env.step(&Action::Continuous(action.clone()));
        let transition = Transition {
            s: obs.clone(),
            a: action.clone(),
            r: result.reward,
            s_next: result.obs.clone(),
            terminal: result.terminated,
            oracle_a,
        };
        buffer.push(transition, &mut buffer_rng).map_err(|e| anyhow!("{e}"))?;
        episode_step += 1;

        if result.terminated || result.truncated {
            obs = env.reset(env_rng.gen());
            episode_step = 0;
            if config.algorithm == Algorithm::Jsrl {
                rollin_h = jsrl_rollin_horizon(&mut rollin_rng, config.jsrl_max_h);
            }
        } else {
            obs = result.obs;
        }

        let mut critic_loss = f64::NAN;
        let mut actor_loss = f64::NAN;
        if step > config.warmup_steps && step % config.update_every == 0 {
            let batch = buffer.sample(config.batch_size, &mut buffer_rng).map_err(|e| anyhow!("{e}"))?;
            let losses = if config.algorithm == Algorithm::Ccge {
                ccge_update(&ccge_cfg, &mut agent, &batch, &mut actor_rng).map(|(l, _)| l)
            } else {
                agent.update(&batch, &mut actor_rng)
            };
            match losses {
                Ok(l) => {
                    critic_loss = l.critic.iter().sum::<f64>() / l.critic.len() as f64;
                    actor_loss = l.actor;
                    interval.critic_loss_sum += critic_loss;
                    interval.actor_loss_sum += actor_loss;
                    interval.alpha_loss_sum += l.alpha_loss;
                    interval.last_alpha = l.alpha;
                    interval.updates += 1;
                }
                Err(CoreError::NonFinite(what)) => {
                    push_diag(
                        &mut diags,
                        StepDiagnostic {
                            env_step: step,
                            action,
                            reward: result.reward,
                            terminal: result.terminated,
                            critic_loss: f64::NAN,
                            actor_loss: f64::NAN,
                            alpha: agent.alpha(),
                        },
                    );
                    write_dump(dir, &diags, &format!("non-finite value: {what}"))?;
                    bail!("run aborted at step {step}: non-finite value: {what} (diagnostics in dump.json)");
                }
                Err(e) => return Err(anyhow!("{e}")),
            }
        }

        push_diag(
            &mut diags,
            StepDiagnostic {
                env_step: step,
                action,
                reward: result.reward,
                terminal: result.terminated,
                critic_loss,
                actor_loss,
                alpha: agent.alpha(),
            },
        );

        if step % config.eval_frequency == 0 || step == config.total_steps {
            let (eval_return, eval_success, init_states) =
                evaluate_actor(&agent.actor, &config.env, config.eval_episodes, &mut eval_rng)?;
            let pairs: Result<Vec<(Vec<f64>, Vec<f64>)>> = init_states
                .iter()
                .map(|s| Ok((s.clone(), agent.actor.mean_action(s).map_err(|e| anyhow!("{e}"))?)))
                .collect();
            let mean_unc = mean_epsilon(config.uncertainty_mode, &agent.critics, &pairs?)
                .map_err(|e| anyhow!("{e}"))?;
            if let Some(o) = oracle.as_mut() {
                if o.is_bootstrappable() {
                    o.maybe_bootstrap(&agent.actor, eval_return).map_err(|e| anyhow!("{e}"))?;
                }
            }
            records.push(MetricRecord {
                run_id: config.run_name.clone(),
                seed,
                env_step: step,
                eval_mean_return: eval_return,
                eval_success,
                guided_ratio: interval.guidance.guidance_ratio().unwrap_or(0.0),
                mean_k: if interval.k_count == 0 { 0.0 } else { interval.k_sum / interval.k_count as f64 },
                mean_uncertainty: mean_unc,
                critic_loss: interval.mean_or(interval.critic_loss_sum, 0.0),
                actor_loss: interval.mean_or(interval.actor_loss_sum, 0.0),
                alpha_loss: interval.mean_or(interval.alpha_loss_sum, 0.0),
                alpha: interval.last_alpha,
            });
            interval = IntervalStats { last_alpha: agent.alpha(), ..Default::default() };
        }
    }

    let ckpt = sac_checkpoint(&agent);
    fs::write(dir.join("checkpoint.json"), ckpt.to_json())?;
    Ok(records)
}

fn train_dqn(config: &RunConfig, seed: u64, dir: &Path) -> Result<Vec<MetricRecord>> {
    let dqn_cfg = config.dqn_config()?;
    let obs_dim = dqn_cfg.obs_dim;

    let mut env_rng = stream_rng(seed, Stream::Env);
    let mut actor_rng = stream_rng(seed, Stream::Actor);
    let mut buffer_rng = stream_rng(seed, Stream::Buffer);
    let mut warmup_rng = stream_rng(seed, Stream::Warmup);
    let mut eval_rng = stream_rng(seed, Stream::Eval);
    let mut init_rng = stream_rng(seed, Stream::Bootstrap);

    let n_actions = match make_env(&config.env).map_err(|e| anyhow!("{e}"))?.spec().action_space {
        ActionSpace::Discrete { n } => n,
        _ => bail!("dqn-study requires a discrete environment"),
    };
    let mut agent = DqnAgent::new(dqn_cfg.clone(), &mut init_rng).map_err(|e| anyhow!("{e}"))?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, config.buffer_mode(), obs_dim, 1)
        .map_err(|e| anyhow!("{e}"))?;

    let mut env = make_env(&config.env).map_err(|e| anyhow!("{e}"))?;
    let mut obs = env.reset(env_rng.gen());
    let mut trajectory: Vec<(Vec<f64>, usize)> = Vec::new();

    let mut unc_sum = 0.0;
    let mut unc_count = 0u64;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;
    let mut records = Vec::new();
    let mut diags: VecDeque<StepDiagnostic> = VecDeque::with_capacity(50);

    for step in 1..=config.total_steps {
        let a = if step <= config.warmup_steps {
            warmup_rng.gen_range(0..n_actions)
        } else {
            agent.act(&obs, &mut actor_rng, config.eps_explore).map_err(|e| anyhow!("{e}"))?
        };
        trajectory.push((obs.clone(), a));
        let result = env.step(&Action::Discrete(a));
        buffer
            .push(
                Transition {
                    s: obs.clone(),
                    a: vec![a as f64],
                    r: result.reward,
                    s_next: result.obs.clone(),
                    terminal: result.terminated,
                    oracle_a: Vec::new(),
                },
                &mut buffer_rng,
            )
            .map_err(|e| anyhow!("{e}"))?;

        if result.terminated || result.truncated {
            // Episode closed: log its mean on-trajectory uncertainty.
            let u = agent.episodic_mean_uncertainty(&trajectory).map_err(|e| anyhow!("{e}"))?;
            unc_sum += u;
            unc_count += 1;
            trajectory.clear();
            obs = env.reset(env_rng.gen());
        } else {
            obs = result.obs;
        }

        let mut step_loss = f64::NAN;
        if step > config.warmup_steps && step % config.update_every == 0 {
            let batch = buffer.sample(config.batch_size, &mut buffer_rng).map_err(|e| anyhow!("{e}"))?;
            match agent.update(&batch) {
                Ok(l) => {
                    step_loss = l;
                    loss_sum += l;
                    loss_count += 1;
                }
                Err(CoreError::NonFinite(what)) => {
                    write_dump(dir, &diags, &format!("non-finite value: {what}"))?;
                    bail!("run aborted at step {step}: non-finite value: {what} (diagnostics in dump.json)");
                }
                Err(e) => return Err(anyhow!("{e}")),
            }
        }

        push_diag(
            &mut diags,
            StepDiagnostic {
                env_step: step,
                action: vec![a as f64],
                reward: result.reward,
                terminal: result.terminated,
                critic_loss: step_loss,
                actor_loss: 0.0,
                alpha: 0.0,
            },
        );

        if step % config.eval_frequency == 0 || step == config.total_steps {
            let (eval_return, eval_success) =
                evaluate_dqn(&agent, &config.env, config.eval_episodes, &mut eval_rng)?;
            records.push(MetricRecord {
                run_id: config.run_name.clone(),
                seed,
                env_step: step,
                eval_mean_return: eval_return,
                eval_success,
                guided_ratio: 0.0,
                mean_k: 0.0,
                mean_uncertainty: if unc_count == 0 { 0.0 } else { unc_sum / unc_count as f64 },
                critic_loss: if loss_count == 0 { 0.0 } else { loss_sum / loss_count as f64 },
                actor_loss: 0.0,
                alpha_loss: 0.0,
                alpha: 0.0,
            });
            unc_sum = 0.0;
            unc_count = 0;
            loss_sum = 0.0;
            loss_count = 0;
        }
    }

    let mut ckpt = Checkpoint::new();
    ckpt.insert_net("online", agent.online());
    ckpt.insert_net("target", agent.target());
    fs::write(dir.join("checkpoint.json"), ckpt.to_json())?;
    Ok(records)
}
