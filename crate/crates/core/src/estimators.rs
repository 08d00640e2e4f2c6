//! Monte Carlo survival curves, domination tables and threshold search.
//!
//! Replica `i` of a run with master seed `s` explores its tree from the key
//! `replica_seed(s, i)` at every rate, so all rates see common random
//! numbers: the link cluster at a larger rate contains the one at a smaller
//! rate, and link survival is pathwise monotone in the rate.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::explore::{explore, Expansion, Explored, TreeSource};
use crate::loops::{root_loop, LoopTrace};
use crate::mc::{paired_z, replicate, wilson_interval, MeanEstimate};
use crate::percolation::{
    delayed_pruning_mask_keyed, PruningParams, PruningTable, DEFAULT_QUADRATURE_NODES,
};

/// Rates below this are treated as the bottom of the search range.
pub const BETA_FLOOR: f64 = 1e-6;
/// Upper end of the threshold search range.
pub const BETA_CEILING: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// The loop of `(o, 0)` visits depth `D`.
    Loop,
    /// The link cluster of the root reaches depth `D`.
    Link,
    /// The link cluster after delayed pruning reaches depth `D`.
    LinkDelay,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Loop, Model::LinkDelay, Model::Link];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Loop => "loop",
            Model::Link => "link",
            Model::LinkDelay => "link-delay",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "loop" => Ok(Model::Loop),
            "link" => Ok(Model::Link),
            "link-delay" | "linkdelay" | "delay" => Ok(Model::LinkDelay),
            other => Err(invalid(
                "model",
                format!("unknown model `{other}` (loop, link, link-delay)"),
            )),
        }
    }
}

/// Everything a survival experiment needs besides the rate.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub source: TreeSource,
    pub u: f64,
    pub depth: usize,
    pub replicas: usize,
    pub seed: u64,
    pub quadrature_nodes: usize,
}

impl Experiment {
    pub fn new(source: TreeSource, u: f64, depth: usize, replicas: usize, seed: u64) -> Self {
        Self {
            source,
            u,
            depth,
            replicas,
            seed,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.u) {
            return Err(invalid("u", format!("must lie in [0, 1], got {}", self.u)));
        }
        if self.replicas < 2 {
            return Err(invalid(
                "N",
                format!("need at least 2 replicas, got {}", self.replicas),
            ));
        }
        if self.depth == 0 {
            return Err(invalid("D", "depth must be at least 1"));
        }
        if self.quadrature_nodes < 64 {
            return Err(invalid("quadrature_nodes", "must be at least 64"));
        }
        Ok(())
    }

    fn table(&self, beta: f64) -> Result<PruningTable> {
        PruningTable::new(PruningParams::with_nodes(
            beta,
            self.u,
            self.quadrature_nodes,
        )?)
    }
}

/// Survival outcomes of one replica at one rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub loop_reaches: bool,
    pub delay_reaches: bool,
    pub link_reaches: bool,
}

impl Outcome {
    pub fn get(&self, model: Model) -> bool {
        match model {
            Model::Loop => self.loop_reaches,
            Model::Link => self.link_reaches,
            Model::LinkDelay => self.delay_reaches,
        }
    }
}

fn loop_of(explored: &Explored) -> Result<LoopTrace> {
    root_loop(&explored.tree, &explored.links)
}

/// Evaluates the requested models on one replica. Models not requested are
/// reported as `false`.
pub fn replica_outcome(
    exp: &Experiment,
    table: &PruningTable,
    beta: f64,
    key: u64,
    models: &[Model],
) -> Result<Outcome> {
    let explored = explore(
        &exp.source,
        Expansion::LinkCluster,
        beta,
        exp.u,
        exp.depth,
        key,
    )?;
    let link_reaches = explored.frontier_hit;
    let mut out = Outcome {
        loop_reaches: false,
        delay_reaches: false,
        link_reaches: link_reaches && models.contains(&Model::Link),
    };
    if !link_reaches {
        return Ok(out);
    }
    if models.contains(&Model::Loop) {
        out.loop_reaches = loop_of(&explored)?.reaches_depth(exp.depth);
    }
    if models.contains(&Model::LinkDelay) {
        let mask = delayed_pruning_mask_keyed(&explored.tree, table, &explored.keys);
        out.delay_reaches = mask.reaches_depth(&explored.tree, exp.depth);
    }
    Ok(out)
}

/// Per-rate survival frequencies of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub model: Model,
    pub betas: Vec<f64>,
    pub u: f64,
    pub depth: usize,
    pub replicas: usize,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub tree: String,
    pub seed: u64,
}

fn check_grid(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(invalid("beta", "empty rate grid"));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(invalid("beta", "rates must be finite and > 0"));
    }
    if betas.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("beta", "rate grid must be sorted"));
    }
    Ok(())
}

/// Outcomes for every replica (outer) and rate (inner).
fn outcome_matrix(exp: &Experiment, betas: &[f64], models: &[Model]) -> Result<Vec<Vec<Outcome>>> {
    exp.validate()?;
    check_grid(betas)?;
    let tables = betas
        .iter()
        .map(|&b| exp.table(b))
        .collect::<Result<Vec<_>>>()?;
    replicate(exp.replicas, exp.seed, |key| {
        betas
            .iter()
            .zip(&tables)
            .map(|(&b, table)| replica_outcome(exp, table, b, key, models))
            .collect()
    })
}

pub fn survival_curve(model: Model, exp: &Experiment, betas: &[f64]) -> Result<SurvivalCurve> {
    let matrix = outcome_matrix(exp, betas, &[model])?;
    let (estimates, stderrs) = (0..betas.len())
        .map(|j| {
            let hits = matrix.iter().filter(|row| row[j].get(model)).count();
            let est = MeanEstimate::from_successes(hits, exp.replicas);
            (est.mean, est.stderr)
        })
        .unzip();
    Ok(SurvivalCurve {
        model,
        betas: betas.to_vec(),
        u: exp.u,
        depth: exp.depth,
        replicas: exp.replicas,
        estimates,
        stderrs,
        tree: exp.source.to_string(),
        seed: exp.seed,
    })
}

/// One rate of a domination table.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationRow {
    pub beta: f64,
    pub p_loop: f64,
    pub p_delay: f64,
    pub p_link: f64,
    /// Paired z statistic of `p_loop − p_delay`; should not be large.
    pub z_loop_delay: f64,
    /// Paired z statistic of `p_delay − p_link`.
    pub z_delay_link: f64,
    pub violation: bool,
}

/// Rate-by-rate comparison of loop, delay∘link and link survival on shared
/// replicas, flagging any ordering violated by more than `z_flag` paired
/// standard errors.
pub fn domination_report(
    exp: &Experiment,
    betas: &[f64],
    z_flag: f64,
) -> Result<Vec<DominationRow>> {
    let matrix = outcome_matrix(exp, betas, &Model::ALL)?;
    let n = exp.replicas;
    Ok(betas
        .iter()
        .enumerate()
        .map(|(j, &beta)| {
            let freq =
                |m: Model| matrix.iter().filter(|row| row[j].get(m)).count() as f64 / n as f64;
            let z_loop_delay = paired_z(
                matrix
                    .iter()
                    .map(|row| (row[j].loop_reaches, row[j].delay_reaches)),
            );
            let z_delay_link = paired_z(
                matrix
                    .iter()
                    .map(|row| (row[j].delay_reaches, row[j].link_reaches)),
            );
            DominationRow {
                beta,
                p_loop: freq(Model::Loop),
                p_delay: freq(Model::LinkDelay),
                p_link: freq(Model::Link),
                z_loop_delay,
                z_delay_link,
                violation: z_loop_delay > z_flag || z_delay_link > z_flag,
            }
        })
        .collect())
}

/// Tuning of [`threshold_bisection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSettings {
    /// Survival level defining the finite-volume threshold.
    pub target: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
    /// Normal quantile of the Wilson bounds used for the interval.
    pub z: f64,
    /// Points of the monotonicity scan inside the bracket.
    pub scan_points: usize,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        Self {
            target: 0.05,
            tolerance: 1e-3,
            z: 1.96,
            scan_points: 8,
        }
    }
}

/// Finite-volume threshold: where depth-`D` survival crosses the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    pub model: Model,
    pub beta_hat: f64,
    /// Rates at which the Wilson upper and lower bounds cross the target.
    pub ci: (f64, f64),
    /// Every rate evaluated, with its survival frequency, in rate order.
    pub scan: Vec<(f64, f64)>,
    pub settings: ThresholdSettings,
}

struct Evaluator<'a> {
    model: Model,
    exp: &'a Experiment,
    seen: Vec<(f64, usize)>,
}

impl Evaluator<'_> {
    fn hits(&mut self, beta: f64) -> Result<usize> {
        if let Some(&(_, h)) = self.seen.iter().find(|(b, _)| *b == beta) {
            return Ok(h);
        }
        let table = self.exp.table(beta)?;
        let outcomes = replicate(self.exp.replicas, self.exp.seed, |key| {
            replica_outcome(self.exp, &table, beta, key, &[self.model])
        })?;
        let h = outcomes.iter().filter(|o| o.get(self.model)).count();
        self.seen.push((beta, h));
        Ok(h)
    }

    /// Smallest rate in `[lo, hi]` (to `tol`) at which `score(hits)` reaches
    /// the target, assuming it is below at `lo` and above at `hi`.
    fn bisect(
        &mut self,
        mut lo: f64,
        mut hi: f64,
        tol: f64,
        above: impl Fn(usize) -> bool,
    ) -> Result<f64> {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if above(self.hits(mid)?) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Locates the rate at which depth-`D` survival of `model` reaches
/// `settings.target`.
///
/// A doubling scan from 0.01 up to [`BETA_CEILING`] brackets the crossing; a
/// finer scan inside the bracket must be monotone to within three standard
/// errors (loop survival is not known to be monotone); then the bracket is
/// bisected. The interval ends are the rates where the Wilson upper and
/// lower bounds of the survival frequency cross the target.
pub fn threshold_bisection(
    model: Model,
    exp: &Experiment,
    settings: ThresholdSettings,
) -> Result<ThresholdEstimate> {
    exp.validate()?;
    if !(settings.target > 0.0 && settings.target < 1.0) {
        return Err(invalid(
            "target",
            format!("must lie in (0, 1), got {}", settings.target),
        ));
    }
    if !(settings.tolerance > 0.0) {
        return Err(invalid("tolerance", "must be positive"));
    }
    let n = exp.replicas;
    let target_hits = |h: usize| h as f64 / n as f64 >= settings.target;
    let mut eval = Evaluator {
        model,
        exp,
        seen: Vec::new(),
    };
    if target_hits(eval.hits(BETA_FLOOR)?) {
        return Err(Error::NoTransition {
            lo: BETA_FLOOR,
            hi: BETA_CEILING,
        });
    }
    let (mut lo, mut hi) = (BETA_FLOOR, 0.01);
    loop {
        if target_hits(eval.hits(hi)?) {
            break;
        }
        if hi >= BETA_CEILING {
            return Err(Error::NoTransition {
                lo: BETA_FLOOR,
                hi: BETA_CEILING,
            });
        }
        lo = hi;
        hi = (2.0 * hi).min(BETA_CEILING);
    }
    // monotonicity inside the bracket
    let points = settings.scan_points.max(2);
    let grid: Vec<f64> = (0..=points)
        .map(|i| lo + (hi - lo) * i as f64 / points as f64)
        .collect();
    let freqs = grid
        .iter()
        .map(|&b| eval.hits(b).map(|h| MeanEstimate::from_successes(h, n)))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..freqs.len() {
        for j in i + 1..freqs.len() {
            let drop = freqs[i].mean - freqs[j].mean;
            let se = (freqs[i].stderr.powi(2) + freqs[j].stderr.powi(2)).sqrt();
            if drop > 0.0 && drop > 3.0 * se.max(1.0 / n as f64) {
                let listing: Vec<String> = grid
                    .iter()
                    .zip(&freqs)
                    .map(|(b, f)| format!("{b:.4}:{:.4}", f.mean))
                    .collect();
                return Err(Error::NonMonotone(listing.join(" ")));
            }
        }
    }
    // tighten the bracket to adjacent scan points before bisecting
    let first = freqs
        .iter()
        .position(|f| f.mean >= settings.target)
        .unwrap_or(points);
    let (blo, bhi) = if first == 0 {
        (lo, grid[0])
    } else {
        (grid[first - 1], grid[first])
    };
    let beta_hat = eval.bisect(blo, bhi.max(blo), settings.tolerance, target_hits)?;
    let upper_hits = |h: usize| wilson_interval(h, n, settings.z).1 >= settings.target;
    let lower_hits = |h: usize| wilson_interval(h, n, settings.z).0 >= settings.target;
    let ci_lo = if upper_hits(eval.hits(lo)?) {
        lo
    } else {
        eval.bisect(lo, hi, settings.tolerance, upper_hits)?
    };
    let ci_hi = if lower_hits(eval.hits(hi)?) {
        eval.bisect(lo, hi, settings.tolerance, lower_hits)?
    } else {
        hi
    };
    let mut scan: Vec<(f64, f64)> = eval
        .seen
        .iter()
        .map(|&(b, h)| (b, h as f64 / n as f64))
        .collect();
    scan.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ThresholdEstimate {
        model,
        beta_hat,
        ci: (ci_lo.min(beta_hat), ci_hi.max(beta_hat)),
        scan,
        settings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::OffspringLaw;

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.as_str().parse::<Model>().unwrap(), m);
        }
        assert!("bond".parse::<Model>().is_err());
    }

    #[test]
    fn link_curve_is_monotone_and_reproducible() {
        let exp = Experiment::new(TreeSource::regular(3).unwrap(), 1.0, 6, 2000, 17);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.15).collect();
        let a = survival_curve(Model::Link, &exp, &grid).unwrap();
        assert!(a.estimates.windows(2).all(|w| w[0] <= w[1]));
        let b = survival_curve(Model::Link, &exp, &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_rate_never_survives() {
        let exp = Experiment::new(TreeSource::regular(3).unwrap(), 1.0, 4, 1000, 3);
        let c = survival_curve(Model::Loop, &exp, &[1e-6]).unwrap();
        assert_eq!(c.estimates, vec![0.0]);
    }

    #[test]
    fn subcritical_law_has_no_transition() {
        let source = TreeSource::galton_watson(&OffspringLaw::Poisson(0.9)).unwrap();
        // depth 40: the whole tree reaches it with probability about 0.003
        let exp = Experiment::new(source, 1.0, 40, 1000, 5);
        let r = threshold_bisection(Model::Link, &exp, ThresholdSettings::default());
        assert!(matches!(r, Err(Error::NoTransition { .. })), "{r:?}");
    }

    #[test]
    fn validation_errors() {
        let exp = Experiment::new(TreeSource::regular(3).unwrap(), 1.0, 4, 0, 3);
        assert!(survival_curve(Model::Link, &exp, &[0.5]).is_err());
        let exp = Experiment::new(TreeSource::regular(3).unwrap(), 1.0, 4, 100, 3);
        assert!(survival_curve(Model::Link, &exp, &[0.5, 0.2]).is_err());
    }
}
