//! Replica fan-out and basic Monte Carlo statistics.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::replica_seed;

/// Runs `task` for replicas `0..n` in parallel, passing each the key
/// `replica_seed(seed, i)`, and returns the results in replica order. The
/// output does not depend on the number of worker threads.
pub fn replicate<T, F>(n: usize, seed: u64, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| task(replica_seed(seed, i)))
        .collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self {
                mean,
                stderr: f64::NAN,
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
        }
    }

    /// Frequency of successes with the binomial standard error
    /// `sqrt(p (1 − p) / n)`.
    pub fn from_successes(successes: usize, n: usize) -> Self {
        let p = successes as f64 / n as f64;
        Self {
            mean: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Paired one-sided z statistic for `mean(a) − mean(b)` from per-replica
/// indicator pairs; positive values mean `a` exceeds `b`.
pub fn paired_z(pairs: impl Iterator<Item = (bool, bool)>) -> f64 {
    let diffs: Vec<f64> = pairs
        .map(|(a, b)| f64::from(u8::from(a)) - f64::from(u8::from(b)))
        .collect();
    let est = MeanEstimate::from_samples(&diffs);
    if est.mean == 0.0 {
        0.0
    } else if est.stderr == 0.0 || est.stderr.is_nan() {
        est.mean.signum() * f64::INFINITY
    } else {
        est.mean / est.stderr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn replicate_keeps_order() {
        let keys = replicate(1000, 5, Ok).unwrap();
        let expected: Vec<u64> = (0..1000).map(|i| replica_seed(5, i)).collect();
        assert_eq!(keys, expected);
    }

    #[test]
    fn wilson_coverage_is_near_nominal() {
        let mut rng = stream(99);
        let trials = 1000;
        let mut covered = 0;
        for _ in 0..trials {
            let p: f64 = 0.05 + 0.9 * rng.random::<f64>();
            let n = 400;
            let k = (0..n).filter(|_| rng.random::<f64>() < p).count();
            let (lo, hi) = wilson_interval(k, n, 1.959_964);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / trials as f64;
        assert!((rate - 0.95).abs() < 0.01, "coverage {rate}");
    }

    #[test]
    fn paired_z_signs() {
        assert_eq!(paired_z([(true, true), (false, false)].into_iter()), 0.0);
        assert!(paired_z([(true, false), (true, false)].into_iter()).is_infinite());
        assert!(paired_z([(true, false), (false, false), (true, true)].into_iter()) > 0.0);
    }
}
