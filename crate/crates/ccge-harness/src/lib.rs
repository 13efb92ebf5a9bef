//! Experiment harness for the CCGE reinforcement-learning stack: config
//! files, seeded deterministic runs, metrics/manifest/checkpoint emission,
//! cross-seed aggregation, and the λ-sweep driver. The `ccge` binary wraps
//! these as subcommands.

pub mod aggregate;
pub mod config;
pub mod run;

pub use aggregate::{aggregate, read_metrics, sweep_lambda};
pub use config::{Algorithm, OracleSpec, RunConfig};
pub use run::{evaluate_actor, evaluate_dqn, run, run_all, MetricRecord};
