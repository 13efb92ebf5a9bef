use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ccge_core::rng::{stream_rng, Stream};
use ccge_harness::config::{Algorithm, RunConfig};
use ccge_harness::run::{evaluate_actor, load_actor_checkpoint, run_all};
use ccge_harness::{aggregate, sweep_lambda};

#[derive(Parser)]
#[command(name = "ccge", about = "Deterministic experiment harness for the CCGE RL stack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed listed in a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum seeds trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory run folders are created under.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Evaluate a saved actor with its deterministic mean policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a lambda grid and emit sweep.csv.
    SweepLambda {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated lambda values, e.g. 0,0.1,0.5,1,2,5
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run the DQN uncertainty study with its default configuration.
    StudyDqn {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Aggregate completed run directories into a long-format summary CSV.
    Aggregate {
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    RunConfig::parse(&text)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, seed, jobs, out } => {
            let cfg = load_config(&config)?;
            let dirs = run_all(&cfg, &out, seed, jobs)?;
            for d in dirs {
                println!("{}", d.display());
            }
        }
        Command::Eval { checkpoint, env, episodes, seed } => {
            let actor = load_actor_checkpoint(&checkpoint)?;
            let mut eval_rng = stream_rng(seed, Stream::Eval);
            let (ret, success, _) = evaluate_actor(&actor, &env, episodes, &mut eval_rng)?;
            println!("mean_return = {ret}");
            println!("mean_success = {success}");
        }
        Command::SweepLambda { config, lambdas, jobs, out } => {
            let cfg = load_config(&config)?;
            let path = sweep_lambda(&cfg, &lambdas, &out, jobs)?;
            println!("{}", path.display());
        }
        Command::StudyDqn { env, jobs, out } => {
            let mut cfg = RunConfig::default();
            cfg.run_name = format!("dqn-{env}");
            cfg.env = env;
            cfg.algorithm = Algorithm::DqnStudy;
            cfg.hidden = vec![64, 64];
            cfg.lr = 5e-4;
            cfg.total_steps = 250_000;
            cfg.seeds = (0..20).collect();
            cfg.validate()?;
            let dirs = run_all(&cfg, &out, None, jobs)?;
            for d in dirs {
                println!("{}", d.display());
            }
        }
        Command::Aggregate { dirs, out } => {
            let csv = aggregate(&dirs)?;
            fs::write(&out, csv)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}
