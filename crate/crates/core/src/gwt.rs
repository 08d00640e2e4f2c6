//! Generating-function criteria for loop percolation on Galton-Watson trees.

use crate::error::{invalid, Error, Result};
use crate::offspring::{binomial_pmf, OffspringLaw};

/// Evaluations whose rigorous tail bound exceeds this fraction of
/// `max(1, |value|)` are refused.
pub const SERIES_TOLERANCE: f64 = 1e-9;
/// Infinite-support laws are truncated where the remaining mass drops below
/// this level.
pub const SERIES_TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Closed,
    Series,
}

#[derive(Debug, Clone)]
enum Tail {
    None,
    Poisson { lambda: f64, mass_from: f64 },
    Geometric { p: f64 },
}

/// Probability generating function `f(z) = Σ ζ_k z^k` on `[0, 1]` and its
/// derivative.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    law: OffspringLaw,
    mode: EvalMode,
    coeffs: Vec<f64>,
    tail: Tail,
}

impl GeneratingFunction {
    /// Closed form for Poisson, binomial, geometric and deterministic laws;
    /// series for the others.
    pub fn new(law: &OffspringLaw) -> Result<Self> {
        law.validate()?;
        match law {
            OffspringLaw::PowerLaw { .. } | OffspringLaw::Empirical(_) => Self::series(law),
            _ => Ok(Self {
                law: law.clone(),
                mode: EvalMode::Closed,
                coeffs: Vec::new(),
                tail: Tail::None,
            }),
        }
    }

    /// Series evaluation for any law. Infinite supports are cut where the
    /// remaining mass is below [`SERIES_TAIL_MASS`] and carry a bound on the
    /// discarded part.
    pub fn series(law: &OffspringLaw) -> Result<Self> {
        law.validate()?;
        let (coeffs, tail) = match *law {
            OffspringLaw::Deterministic(d) => {
                let mut c = vec![0.0; d + 1];
                c[d] = 1.0;
                (c, Tail::None)
            }
            OffspringLaw::Binomial { n, p } => (binomial_pmf(n, p), Tail::None),
            OffspringLaw::Empirical(ref w) => {
                let total: f64 = w.iter().sum();
                (w.iter().map(|x| x / total).collect(), Tail::None)
            }
            OffspringLaw::PowerLaw { tau, cutoff } => {
                let mut c: Vec<f64> = (0..=cutoff)
                    .map(|k| if k == 0 { 0.0 } else { (k as f64).powf(-tau) })
                    .collect();
                // normalise summing the small terms first
                let total: f64 = c.iter().rev().sum();
                c.iter_mut().for_each(|x| *x /= total);
                (c, Tail::None)
            }
            OffspringLaw::Poisson(lambda) => {
                let mut c = vec![(-lambda).exp()];
                let mut cdf = c[0];
                while 1.0 - cdf >= SERIES_TAIL_MASS || (c.len() as f64) < lambda {
                    let k = c.len() as f64;
                    let next = c[c.len() - 1] * lambda / k;
                    cdf += next;
                    c.push(next);
                    if c.len() > 100_000 {
                        break;
                    }
                }
                let mass_from = (1.0 - cdf).max(0.0);
                (c, Tail::Poisson { lambda, mass_from })
            }
            OffspringLaw::Geometric(p) => {
                let q = 1.0 - p;
                let mut c = vec![p];
                while q.powi(c.len() as i32) >= SERIES_TAIL_MASS && c.len() < 10_000_000 {
                    let last = c[c.len() - 1];
                    c.push(last * q);
                }
                (c, Tail::Geometric { p })
            }
        };
        Ok(Self {
            law: law.clone(),
            mode: EvalMode::Series,
            coeffs,
            tail,
        })
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    fn check_z(z: f64) -> Result<()> {
        if (0.0..=1.0).contains(&z) {
            Ok(())
        } else {
            Err(invalid(
                "z",
                format!("generating functions are evaluated on [0, 1], got {z}"),
            ))
        }
    }

    /// Bounds on the discarded parts of `Σ ζ_k` and `Σ k ζ_k` beyond the
    /// stored coefficients (valid for every `z ∈ [0, 1]`).
    fn tail_bounds(&self) -> (f64, f64) {
        let big_k = self.coeffs.len() as f64;
        match self.tail {
            Tail::None => (0.0, 0.0),
            // Σ_{k≥K} k ζ_k = λ P(X ≥ K − 1) ≤ λ (mass from K plus ζ_{K−1})
            Tail::Poisson { lambda, mass_from } => {
                let last = self.coeffs.last().copied().unwrap_or(0.0);
                (mass_from, lambda * (mass_from + last))
            }
            Tail::Geometric { p } => {
                let q = 1.0 - p;
                let mass = q.powf(big_k);
                // Σ_{k≥K} k p q^k = q^K (K + q/p)
                (mass, mass * (big_k + q / p))
            }
        }
    }

    fn checked(&self, z: f64, value: f64, bound: f64) -> Result<f64> {
        if bound > SERIES_TOLERANCE * value.abs().max(1.0) {
            return Err(Error::Precision { z, bound });
        }
        Ok(value)
    }

    /// `f(z)`.
    pub fn value(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        match self.mode {
            EvalMode::Closed => Ok(match self.law {
                OffspringLaw::Deterministic(d) => z.powi(d as i32),
                OffspringLaw::Poisson(lambda) => (lambda * (z - 1.0)).exp(),
                OffspringLaw::Binomial { n, p } => (1.0 - p + p * z).powi(n as i32),
                OffspringLaw::Geometric(p) => p / (1.0 - (1.0 - p) * z),
                _ => unreachable!("closed form only for the four classical laws"),
            }),
            EvalMode::Series => {
                let mut power = 1.0;
                let mut sum = 0.0;
                for &c in &self.coeffs {
                    sum += c * power;
                    power *= z;
                }
                self.checked(z, sum, self.tail_bounds().0)
            }
        }
    }

    /// `f′(z)`.
    pub fn derivative(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        match self.mode {
            EvalMode::Closed => Ok(match self.law {
                OffspringLaw::Deterministic(0) => 0.0,
                OffspringLaw::Deterministic(d) => d as f64 * z.powi(d as i32 - 1),
                OffspringLaw::Poisson(lambda) => lambda * (lambda * (z - 1.0)).exp(),
                OffspringLaw::Binomial { n: 0, .. } => 0.0,
                OffspringLaw::Binomial { n, p } => {
                    n as f64 * p * (1.0 - p + p * z).powi(n as i32 - 1)
                }
                OffspringLaw::Geometric(p) => {
                    let q = 1.0 - p;
                    p * q / (1.0 - q * z).powi(2)
                }
                _ => unreachable!("closed form only for the four classical laws"),
            }),
            EvalMode::Series => {
                let mut power = 1.0;
                let mut sum = 0.0;
                for (k, &c) in self.coeffs.iter().enumerate().skip(1) {
                    sum += k as f64 * c * power;
                    power *= z;
                }
                self.checked(z, sum, self.tail_bounds().1)
            }
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.derivative(1.0)
    }
}

/// `h(β) = P(P > 1 | P > 0)` for `P ~ Poisson(β)`, i.e. `1 − β / (e^β − 1)`.
pub fn h_of_beta(beta: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid(
            "beta",
            format!("must be finite and > 0, got {beta}"),
        ));
    }
    Ok((beta.exp_m1() - beta) / beta.exp_m1())
}

/// Mean offspring of the uni-link-only subtree:
/// `(1 − h(β)) (1 − e^{−β}) f′(e^{−β} + (1 − e^{−β})(1 − h(β)))`.
pub fn expected_y(beta: f64, f: &GeneratingFunction) -> Result<f64> {
    let h = h_of_beta(beta)?;
    let keep = -(-beta).exp_m1();
    let z = (1.0 - keep + keep * (1.0 - h)).min(1.0);
    Ok((1.0 - h) * keep * f.derivative(z)?)
}

/// Heavy-tail test at one `ε`: the left side `√ε f′(1 − ε)` and whether it
/// exceeds `2^{−1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyTailCheck {
    pub epsilon: f64,
    pub lhs: f64,
    pub holds: bool,
}

/// Evaluates `√ε f′(1 − ε) > 2^{−1/2}` on every grid point. Verdicts are
/// per point; nothing is inferred between them.
pub fn heavy_tail_condition(
    f: &GeneratingFunction,
    eps_grid: &[f64],
) -> Result<Vec<HeavyTailCheck>> {
    eps_grid
        .iter()
        .map(|&epsilon| {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(invalid(
                    "epsilon",
                    format!("must lie in (0, 1), got {epsilon}"),
                ));
            }
            let lhs = epsilon.sqrt() * f.derivative(1.0 - epsilon)?;
            Ok(HeavyTailCheck {
                epsilon,
                lhs,
                holds: lhs > std::f64::consts::FRAC_1_SQRT_2,
            })
        })
        .collect()
}

/// For Poisson(λ) offspring `f′(1 − ε) ≤ λ`, so the condition provably
/// fails for every `ε ≤ 1/(2λ²)`; returns that bound.
pub fn poisson_heavy_tail_failure_bound(lambda: f64) -> f64 {
    1.0 / (2.0 * lambda * lambda)
}

/// Link percolation threshold `−ln(1 − 1/m)` of a Galton-Watson tree with
/// mean offspring `m`; infinite when `m ≤ 1`.
pub fn link_threshold(mean_offspring: f64) -> Result<f64> {
    if !(mean_offspring > 0.0) {
        return Err(invalid(
            "mean",
            format!("must be > 0, got {mean_offspring}"),
        ));
    }
    if mean_offspring <= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-(-1.0 / mean_offspring).ln_1p())
}

/// Sufficient condition `β e^{−β} λ > 1` for loop percolation with
/// Poisson(λ) offspring.
pub fn poisson_sufficient(beta: f64, lambda: f64) -> bool {
    beta * (-beta).exp() * lambda > 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_examples() {
        let small = h_of_beta(0.1).unwrap();
        assert!((small - (0.05 - 0.01 / 12.0)).abs() < 0.001 * 0.01);
        let one = h_of_beta(1.0).unwrap();
        let e = (-1f64).exp();
        assert!((one - (1.0 - 2.0 * e) / (1.0 - e)).abs() < 1e-15);
        assert!((one - 0.41802).abs() < 1e-5);
        assert!(h_of_beta(200.0).unwrap() > 1.0 - 1e-12);
        assert!(h_of_beta(0.0).is_err());
    }

    #[test]
    fn h_is_strictly_increasing() {
        let values: Vec<f64> = (1..=1000)
            .map(|i| h_of_beta(i as f64 * 0.01).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn generating_functions_are_normalised() {
        let laws = [
            OffspringLaw::Poisson(3.0),
            OffspringLaw::Binomial { n: 10, p: 0.3 },
            OffspringLaw::Geometric(0.4),
            OffspringLaw::Deterministic(3),
            OffspringLaw::PowerLaw {
                tau: 2.5,
                cutoff: 1000,
            },
            OffspringLaw::Empirical(vec![1.0, 2.0, 3.0]),
        ];
        for law in &laws {
            for f in [
                GeneratingFunction::new(law).unwrap(),
                GeneratingFunction::series(law).unwrap(),
            ] {
                assert!((f.value(1.0).unwrap() - 1.0).abs() < 1e-10, "{law}");
                assert!((f.mean().unwrap() - law.mean()).abs() < 1e-8, "{law}");
            }
            let closed = GeneratingFunction::new(law).unwrap();
            let series = GeneratingFunction::series(law).unwrap();
            for z in [0.0, 0.3, 0.9, 0.999] {
                assert!((closed.value(z).unwrap() - series.value(z).unwrap()).abs() < 1e-8);
                assert!(
                    (closed.derivative(z).unwrap() - series.derivative(z).unwrap()).abs() < 1e-8
                );
            }
        }
    }

    #[test]
    fn expected_y_examples() {
        let f = GeneratingFunction::new(&OffspringLaw::Deterministic(3)).unwrap();
        let h = h_of_beta(1.0).unwrap();
        let e = (-1f64).exp();
        let direct = 3.0 * (1.0 - h) * (1.0 - e) * (e + (1.0 - e) * (1.0 - h)).powi(2);
        assert!((expected_y(1.0, &f).unwrap() - direct).abs() < 1e-14);
        assert!(expected_y(1e-9, &f).unwrap() < 1e-8);
        let g = GeneratingFunction::new(&OffspringLaw::Poisson(4.0)).unwrap();
        for beta in [0.1, 0.5, 2.0] {
            assert!(expected_y(beta, &g).unwrap() <= (1.0 - (-beta).exp()) * 4.0);
        }
    }

    #[test]
    fn heavy_tail_examples() {
        let poisson = GeneratingFunction::new(&OffspringLaw::Poisson(5.0)).unwrap();
        let bound = poisson_heavy_tail_failure_bound(5.0);
        let checks = heavy_tail_condition(&poisson, &[bound, bound / 10.0, 1e-4]).unwrap();
        assert!(checks.iter().all(|c| !c.holds));
        let det = GeneratingFunction::new(&OffspringLaw::Deterministic(4)).unwrap();
        assert!(!heavy_tail_condition(&det, &[1e-3]).unwrap()[0].holds);
        assert!(heavy_tail_condition(&det, &[0.0]).is_err());
    }

    #[test]
    fn thresholds_and_poisson_condition() {
        assert!((link_threshold(2.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(link_threshold(1.0).unwrap().is_infinite());
        assert!(link_threshold(1e9).unwrap() < 1e-8);
        assert!(link_threshold(0.0).is_err());
        assert!((link_threshold(3.0).unwrap() - 0.405465).abs() < 1e-6);
        assert!(poisson_sufficient(1.0, 3.0));
        assert!(poisson_sufficient(0.2, 10.0));
        assert!((1..1000).all(|i| !poisson_sufficient(i as f64 * 0.01, 2.0)));
    }
}
