//! Offspring laws for Galton-Watson trees and their samplers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Offspring distribution `ζ = (ζ_0, ζ_1, …)`.
///
/// `Geometric(p)` counts failures before the first success, so
/// `ζ_k = p (1 − p)^k` for `k ≥ 0`. `PowerLaw { tau, cutoff }` has
/// `ζ_k ∝ k^{−τ}` on `1 ≤ k ≤ cutoff`; relative to the untruncated zeta law
/// the discarded tail mass is below `cutoff^{1−τ} / (τ − 1)`.
/// `Empirical` weights are normalised on construction of a sampler or
/// generating function.
#[derive(Debug, Clone, PartialEq)]
pub enum OffspringLaw {
    Deterministic(usize),
    Poisson(f64),
    Binomial { n: usize, p: f64 },
    Geometric(f64),
    PowerLaw { tau: f64, cutoff: usize },
    Empirical(Vec<f64>),
}

impl OffspringLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OffspringLaw::Deterministic(_) => Ok(()),
            OffspringLaw::Poisson(lambda) => {
                if lambda.is_finite() && lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(invalid(
                        "lambda",
                        format!("must be finite and >= 0, got {lambda}"),
                    ))
                }
            }
            OffspringLaw::Binomial { p, .. } => check_probability("p", p),
            OffspringLaw::Geometric(p) => {
                check_probability("p", p)?;
                if p == 0.0 {
                    return Err(invalid("p", "geometric law needs p > 0"));
                }
                Ok(())
            }
            OffspringLaw::PowerLaw { tau, cutoff } => {
                if !(tau.is_finite() && tau > 1.0) {
                    return Err(invalid(
                        "tau",
                        format!("power-law exponent must exceed 1, got {tau}"),
                    ));
                }
                if cutoff == 0 {
                    return Err(invalid("cutoff", "must be at least 1"));
                }
                Ok(())
            }
            OffspringLaw::Empirical(ref w) => {
                if w.is_empty() {
                    return Err(invalid("weights", "empty weight list"));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(invalid(
                        "weights",
                        "weights must be finite and non-negative",
                    ));
                }
                if w.iter().sum::<f64>() <= 0.0 {
                    return Err(invalid("weights", "weights sum to zero"));
                }
                Ok(())
            }
        }
    }

    /// Mean offspring number `Σ k ζ_k`.
    pub fn mean(&self) -> f64 {
        match *self {
            OffspringLaw::Deterministic(d) => d as f64,
            OffspringLaw::Poisson(lambda) => lambda,
            OffspringLaw::Binomial { n, p } => n as f64 * p,
            OffspringLaw::Geometric(p) => (1.0 - p) / p,
            OffspringLaw::PowerLaw { tau, cutoff } => {
                let (mut num, mut den) = (0.0, 0.0);
                // smallest terms first
                for k in (1..=cutoff).rev() {
                    let w = (k as f64).powf(-tau);
                    den += w;
                    num += k as f64 * w;
                }
                num / den
            }
            OffspringLaw::Empirical(ref w) => {
                let total: f64 = w.iter().sum();
                w.iter().enumerate().map(|(k, x)| k as f64 * x).sum::<f64>() / total
            }
        }
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in [0, 1], got {p}")))
    }
}

impl fmt::Display for OffspringLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OffspringLaw::Deterministic(d) => write!(f, "deterministic:{d}"),
            OffspringLaw::Poisson(l) => write!(f, "poisson:{l}"),
            OffspringLaw::Binomial { n, p } => write!(f, "binomial:{n}:{p}"),
            OffspringLaw::Geometric(p) => write!(f, "geometric:{p}"),
            OffspringLaw::PowerLaw { tau, cutoff } => write!(f, "powerlaw:{tau}:{cutoff}"),
            OffspringLaw::Empirical(w) => {
                write!(f, "empirical:")?;
                for (i, x) in w.iter().enumerate() {
                    if i > 0 {
                        write!(f, "/")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for OffspringLaw {
    type Err = Error;

    /// Parses `poisson:3`, `binomial:10:0.3`, `geometric:0.4`,
    /// `deterministic:2`, `powerlaw:1.3:100000` or `empirical:0.2/0.3/0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default().trim().to_ascii_lowercase();
        let args: Vec<&str> = parts.map(str::trim).collect();
        let bad = |reason: &str| invalid("law", format!("`{s}`: {reason}"));
        let num = |i: usize| -> Result<f64> {
            args.get(i)
                .ok_or_else(|| bad("missing argument"))?
                .parse::<f64>()
                .map_err(|_| bad("not a number"))
        };
        let int = |i: usize| -> Result<usize> {
            args.get(i)
                .ok_or_else(|| bad("missing argument"))?
                .parse::<usize>()
                .map_err(|_| bad("not a non-negative integer"))
        };
        let law = match kind.as_str() {
            "deterministic" | "det" => OffspringLaw::Deterministic(int(0)?),
            "poisson" => OffspringLaw::Poisson(num(0)?),
            "binomial" => OffspringLaw::Binomial {
                n: int(0)?,
                p: num(1)?,
            },
            "geometric" => OffspringLaw::Geometric(num(0)?),
            "powerlaw" => OffspringLaw::PowerLaw {
                tau: num(0)?,
                cutoff: int(1)?,
            },
            "empirical" => {
                let list = args.first().ok_or_else(|| bad("missing weights"))?;
                let w = list
                    .split('/')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| bad("bad weight")))
                    .collect::<Result<Vec<_>>>()?;
                OffspringLaw::Empirical(w)
            }
            _ => return Err(bad("unknown law")),
        };
        law.validate()?;
        Ok(law)
    }
}

/// Inverse-transform sampler prepared from an [`OffspringLaw`].
#[derive(Debug, Clone)]
pub struct OffspringSampler {
    law: OffspringLaw,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Fixed(usize),
    Poisson(f64),
    Table(Vec<f64>),
    Geometric(f64),
    PowerLaw { tau: f64, cutoff: usize, peak: f64 },
}

impl OffspringSampler {
    pub fn new(law: &OffspringLaw) -> Result<Self> {
        law.validate()?;
        let kind = match *law {
            OffspringLaw::Deterministic(d) => SamplerKind::Fixed(d),
            OffspringLaw::Poisson(l) => SamplerKind::Poisson(l),
            OffspringLaw::Binomial { n, p } => SamplerKind::Table(cumulative(&binomial_pmf(n, p))),
            OffspringLaw::Geometric(p) => SamplerKind::Geometric(p),
            OffspringLaw::PowerLaw { tau, cutoff } => SamplerKind::PowerLaw {
                tau,
                cutoff,
                peak: acceptance_ratio(tau, 1),
            },
            OffspringLaw::Empirical(ref w) => SamplerKind::Table(cumulative(w)),
        };
        Ok(Self {
            law: law.clone(),
            kind,
        })
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.kind {
            SamplerKind::Fixed(d) => d,
            SamplerKind::Poisson(l) => poisson_inverse(l, rng.random::<f64>()),
            SamplerKind::Table(ref cdf) => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
            }
            SamplerKind::Geometric(p) => {
                if p >= 1.0 {
                    return 0;
                }
                let u = 1.0 - rng.random::<f64>(); // (0, 1]
                (u.ln() / (-p).ln_1p()).floor() as usize
            }
            SamplerKind::PowerLaw { tau, cutoff, peak } => loop {
                // continuous Pareto on [1, cutoff + 1), floored, then thinned
                let a = 1.0 - tau;
                let top = ((cutoff + 1) as f64).powf(a);
                let u: f64 = rng.random();
                let x = (1.0 - u * (1.0 - top)).powf(1.0 / a);
                let k = (x.floor() as usize).clamp(1, cutoff);
                if rng.random::<f64>() * peak <= acceptance_ratio(tau, k) {
                    break k;
                }
            },
        }
    }
}

fn acceptance_ratio(tau: f64, k: usize) -> f64 {
    let k = k as f64;
    let cell = (k.powf(1.0 - tau) - (k + 1.0).powf(1.0 - tau)) / (tau - 1.0);
    k.powf(-tau) / cell
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

pub(crate) fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut log_choose = 0.0;
    for (k, slot) in pmf.iter_mut().enumerate() {
        if k > 0 {
            log_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        *slot = (log_choose + k as f64 * lp + (n - k) as f64 * lq).exp();
    }
    pmf
}

/// Smallest `k` with `P(Poisson(mean) ≤ k) ≥ u`.
///
/// Non-decreasing in `mean` for fixed `u`, which is what makes counts drawn
/// from one uniform nest across intensities.
pub fn poisson_inverse(mean: f64, u: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let mut k = 0usize;
    let mut term = (-mean).exp();
    let mut cdf = term;
    while cdf < u {
        k += 1;
        term *= mean / k as f64;
        cdf += term;
        if term < 1e-300 && k as f64 > mean {
            break;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sample_mean(law: &OffspringLaw, n: usize) -> (f64, f64) {
        let s = OffspringSampler::new(law).unwrap();
        let mut rng = stream(7);
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng) as f64).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, (v / n as f64).sqrt())
    }

    #[test]
    fn sampler_means_match_law_means() {
        for law in [
            OffspringLaw::Poisson(2.5),
            OffspringLaw::Binomial { n: 7, p: 0.3 },
            OffspringLaw::Geometric(0.4),
            OffspringLaw::Empirical(vec![0.2, 0.3, 0.5]),
            OffspringLaw::PowerLaw {
                tau: 2.5,
                cutoff: 50,
            },
        ] {
            let (m, se) = sample_mean(&law, 200_000);
            assert!(
                (m - law.mean()).abs() < 4.0 * se,
                "{law}: {m} vs {}",
                law.mean()
            );
        }
    }

    #[test]
    fn power_law_small_values_have_right_frequencies() {
        let law = OffspringLaw::PowerLaw {
            tau: 1.3,
            cutoff: 1000,
        };
        let s = OffspringSampler::new(&law).unwrap();
        let z: f64 = (1..=1000).map(|k| (k as f64).powf(-1.3)).sum();
        let mut rng = stream(3);
        let n = 200_000;
        let ones = (0..n).filter(|_| s.sample(&mut rng) == 1).count() as f64 / n as f64;
        let p1 = 1.0 / z;
        let se = (p1 * (1.0 - p1) / n as f64).sqrt();
        assert!((ones - p1).abs() < 4.0 * se);
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "poisson:3",
            "binomial:10:0.3",
            "geometric:0.4",
            "deterministic:2",
            "powerlaw:1.3:100000",
            "empirical:0.2/0.3/0.5",
        ] {
            let law: OffspringLaw = s.parse().unwrap();
            assert_eq!(law.to_string(), s);
        }
        assert!("poisson:-1".parse::<OffspringLaw>().is_err());
        assert!("powerlaw:0.9:10".parse::<OffspringLaw>().is_err());
        assert!("zipf:2".parse::<OffspringLaw>().is_err());
    }

    #[test]
    fn poisson_inverse_is_monotone_in_mean() {
        for i in 0..200 {
            let u = (i as f64 + 0.5) / 200.0;
            let mut last = 0;
            for j in 1..60 {
                let k = poisson_inverse(j as f64 * 0.1, u);
                assert!(k >= last);
                last = k;
            }
        }
    }
}
