//! Evaluation statistics: interquartile mean and percentile-bootstrap
//! confidence intervals.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::CoreError;

/// Interquartile mean: sort, trim floor(n/4) values from each end, average
/// the rest. For n < 4 nothing is trimmed and this is the plain mean.
pub fn iqm(values: &[f64]) -> Result<f64, CoreError> {
    if values.is_empty() {
        return Err(CoreError::Stats("iqm of empty slice".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("iqm input must not contain NaN"));
    let trim = sorted.len() / 4;
    let kept = &sorted[trim..sorted.len() - trim];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Percentile bootstrap over the IQM statistic.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    values: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<(f64, f64), CoreError> {
    if values.len() < 2 {
        return Err(CoreError::Stats("bootstrap_ci needs at least 2 values".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(CoreError::Stats("bootstrap level must be in (0, 1)".into()));
    }
    let mut stats = Vec::with_capacity(resamples);
    let mut resample = Vec::with_capacity(values.len());
    for _ in 0..resamples {
        resample.clear();
        for _ in 0..values.len() {
            resample.push(values[rng.gen_range(0..values.len())]);
        }
        stats.push(iqm(&resample)?);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    let lo_idx = percentile_index(stats.len(), alpha);
    let hi_idx = percentile_index(stats.len(), 1.0 - alpha);
    Ok((stats[lo_idx], stats[hi_idx]))
}

fn percentile_index(n: usize, p: f64) -> usize {
    let idx = (p * (n - 1) as f64) as usize;
    idx.min(n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use alloc::vec;

    #[test]
    fn iqm_examples() {
        assert_eq!(iqm(&[0.0, 1.0, 2.0, 100.0]).unwrap(), 1.5);
        let v: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        assert_eq!(iqm(&v).unwrap(), 4.5);
        assert_eq!(iqm(&[3.0, 3.0, 3.0, 3.0, 3.0]).unwrap(), 3.0);
        assert!(iqm(&[]).is_err());
    }

    #[test]
    fn iqm_permutation_invariant() {
        let base = vec![5.0, -1.0, 3.0, 8.0, 2.0, 2.5, 7.0];
        let perm = vec![8.0, 2.5, -1.0, 7.0, 3.0, 2.0, 5.0];
        assert_eq!(iqm(&base).unwrap(), iqm(&perm).unwrap());
    }

    #[test]
    fn bootstrap_zero_width_for_identical_values() {
        let mut rng = stream_rng(0, Stream::Eval);
        let (lo, hi) = bootstrap_ci(&[4.0; 10], 0.95, 500, &mut rng).unwrap();
        assert_eq!(lo, 4.0);
        assert_eq!(hi, 4.0);
    }

    #[test]
    fn bootstrap_brackets_the_iqm() {
        let mut rng = stream_rng(1, Stream::Eval);
        let values: Vec<f64> = (0..25).map(|i| (i as f64 * 0.77).sin() * 10.0).collect();
        let center = iqm(&values).unwrap();
        let (lo, hi) = bootstrap_ci(&values, 0.95, 2000, &mut rng).unwrap();
        assert!(lo <= center && center <= hi, "({lo}, {hi}) vs {center}");
    }

    #[test]
    fn bootstrap_coverage_on_synthetic_normal_data() {
        // Monte Carlo: over many synthetic datasets, the 90% interval should
        // cover the population IQM (= population mean 0 for a symmetric
        // distribution) roughly 90% of the time.
        let mut rng = stream_rng(2, Stream::Eval);
        let trials = 500;
        let mut covered = 0;
        for _ in 0..trials {
            let sample: Vec<f64> = (0..40).map(|_| crate::rng::next_standard_normal(&mut rng)).collect();
            let (lo, hi) = bootstrap_ci(&sample, 0.90, 400, &mut rng).unwrap();
            if lo <= 0.0 && 0.0 <= hi {
                covered += 1;
            }
        }
        let coverage = covered as f64 / trials as f64;
        assert!((coverage - 0.90).abs() < 0.05, "coverage {coverage}");
    }
}
