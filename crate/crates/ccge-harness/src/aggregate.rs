//! Cross-seed aggregation (IQM + bootstrapped CI, long-format CSV) and the
//! λ-sweep driver.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use ccge_core::rng::{stream_rng, Stream};
use ccge_core::stats::{bootstrap_ci, iqm};

use crate::config::RunConfig;
use crate::run::{run_all, MetricRecord, METRICS_HEADER};

pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const CI_LEVEL: f64 = 0.95;

/// Parses one run directory's `metrics.csv` back into records.
pub fn read_metrics(dir: &Path) -> Result<Vec<MetricRecord>> {
    let path = dir.join("metrics.csv");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("{}: empty file", path.display()))?;
    if header != METRICS_HEADER {
        bail!("{}: unexpected header '{header}'", path.display());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            bail!("{}: row {} has {} fields, expected 12", path.display(), i + 2, f.len());
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse().map_err(|e| anyhow!("{}: row {}: {e}", path.display(), i + 2))
        };
        out.push(MetricRecord {
            run_id: f[0].to_string(),
            seed: f[1].parse()?,
            env_step: f[2].parse()?,
            eval_mean_return: num(3)?,
            eval_success: num(4)?,
            guided_ratio: num(5)?,
            mean_k: num(6)?,
            mean_uncertainty: num(7)?,
            critic_loss: num(8)?,
            actor_loss: num(9)?,
            alpha_loss: num(10)?,
            alpha: num(11)?,
        });
    }
    Ok(out)
}

pub const SUMMARY_HEADER: &str = "env_step,metric,n_runs,iqm,ci_lo,ci_hi";

/// Per-evaluation-step IQM and bootstrapped CI across runs, long-format CSV.
///
/// All runs must share the same evaluation-step grid; the result is
/// independent of the order the directories are listed in.
pub fn aggregate(dirs: &[PathBuf]) -> Result<String> {
    if dirs.is_empty() {
        bail!("aggregate needs at least one completed run directory");
    }
    let mut runs: Vec<(PathBuf, Vec<MetricRecord>)> = dirs
        .iter()
        .map(|d| read_metrics(d).map(|m| (d.clone(), m)))
        .collect::<Result<_>>()?;
    // Canonical ordering makes the output independent of argument order.
    runs.sort_by(|a, b| {
        let ka = a.1.first().map(|r| (r.run_id.clone(), r.seed));
        let kb = b.1.first().map(|r| (r.run_id.clone(), r.seed));
        ka.cmp(&kb).then_with(|| a.0.cmp(&b.0))
    });

    let grid: Vec<u64> = runs[0].1.iter().map(|r| r.env_step).collect();
    let mut offending = Vec::new();
    for (dir, recs) in &runs {
        let g: Vec<u64> = recs.iter().map(|r| r.env_step).collect();
        if g != grid {
            offending.push(dir.display().to_string());
        }
    }
    if !offending.is_empty() {
        bail!(
            "evaluation-step grids do not match the first run ({}); offending runs: {}",
            runs[0].0.display(),
            offending.join(", ")
        );
    }

    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (row, &step) in grid.iter().enumerate() {
        for (metric, extract) in [
            ("eval_mean_return", (|r: &MetricRecord| r.eval_mean_return) as fn(&MetricRecord) -> f64),
            ("eval_success", |r: &MetricRecord| r.eval_success),
        ] {
            let values: Vec<f64> = runs.iter().map(|(_, recs)| extract(&recs[row])).collect();
            let m = iqm(&values).map_err(|e| anyhow!("{e}"))?;
            let (lo, hi) = if values.len() < 2 {
                (m, m)
            } else {
                // Fresh fixed-seed generator per cell keeps the CI a pure
                // function of the value multiset.
                let mut rng = stream_rng(0, Stream::Eval);
                bootstrap_ci(&values, CI_LEVEL, BOOTSTRAP_RESAMPLES, &mut rng).map_err(|e| anyhow!("{e}"))?
            };
            out.push_str(&format!("{step},{metric},{},{m},{lo},{hi}\n", values.len()));
        }
    }
    Ok(out)
}

pub const SWEEP_HEADER: &str = "lambda,env_step,mean_guidance_ratio,mean_eval_return";

/// Runs the λ grid over the base config's seeds and writes `sweep.csv`:
/// per evaluation interval, the mean guidance ratio and mean eval return
/// for each λ bucket (plain means across seeds).
pub fn sweep_lambda(base: &RunConfig, lambdas: &[f64], out_dir: &Path, jobs: usize) -> Result<PathBuf> {
    if lambdas.len() < 2 {
        bail!("sweep-lambda needs at least two lambda values");
    }
    for l in lambdas {
        if !(l.is_finite() && *l >= 0.0) {
            bail!("lambda values must be finite and >= 0, got {l}");
        }
    }
    let mut rows: Vec<(f64, Vec<MetricRecord>)> = Vec::new();
    for &lambda in lambdas {
        let mut cfg = base.clone();
        cfg.lambda = lambda;
        cfg.run_name = format!("{}-lam{lambda}", base.run_name);
        let dirs = run_all(&cfg, out_dir, None, jobs)?;
        for d in dirs {
            rows.push((lambda, read_metrics(&d)?));
        }
    }

    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for &lambda in lambdas {
        let runs: Vec<&Vec<MetricRecord>> =
            rows.iter().filter(|(l, _)| *l == lambda).map(|(_, m)| m).collect();
        let grid: Vec<u64> = runs[0].iter().map(|r| r.env_step).collect();
        for (row, &step) in grid.iter().enumerate() {
            let n = runs.len() as f64;
            let mean_gr = runs.iter().map(|m| m[row].guided_ratio).sum::<f64>() / n;
            let mean_ret = runs.iter().map(|m| m[row].eval_mean_return).sum::<f64>() / n;
            out.push_str(&format!("{lambda},{step},{mean_gr},{mean_ret}\n"));
        }
    }
    let path = out_dir.join("sweep.csv");
    fs::write(&path, &out)?;
    Ok(path)
}
