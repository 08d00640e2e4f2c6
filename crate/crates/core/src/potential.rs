//! Gauges, effective conductance and branching-number estimates.

use crate::error::{invalid, Error, Result};
use crate::explore::{explore, Expansion, TreeSource};
use crate::mc::{replicate, MeanEstimate};
use crate::percolation::{delayed_pruning_mask_keyed, PruningParams, PruningTable};
use crate::tree::{Edge, RootedTree, Vertex};

/// Vertex function with value 1 at the root, non-decreasing along rays.
/// `increments[x] = g(x) − g(parent(x))` serves as the resistance of the
/// edge above `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauge {
    values: Vec<f64>,
    increments: Vec<f64>,
}

impl Gauge {
    pub fn from_values(tree: &RootedTree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(invalid(
                "gauge",
                format!("expected {} values, got {}", tree.len(), values.len()),
            ));
        }
        if values[0] != 1.0 {
            return Err(invalid("gauge", "value at the root must be 1"));
        }
        let mut increments = vec![0.0; tree.len()];
        for v in tree.edges() {
            let p = tree.parent(v).expect("edge has a parent");
            let inc = values[v] - values[p];
            if !(inc >= 0.0) {
                return Err(invalid(
                    "gauge",
                    format!("decreases along the edge above vertex {v}"),
                ));
            }
            increments[v] = inc;
        }
        Ok(Self { values, increments })
    }

    /// `g(x) = q^{−|x|}` for `q ∈ (0, 1]`.
    pub fn exponential(tree: &RootedTree, q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(invalid("q", format!("must lie in (0, 1], got {q}")));
        }
        let values = tree
            .vertices()
            .map(|v| q.powi(-(tree.depth(v) as i32)))
            .collect();
        Self::from_values(tree, values)
    }

    pub fn value(&self, v: Vertex) -> f64 {
        self.values[v]
    }

    pub fn increment(&self, v: Vertex) -> f64 {
        self.increments[v]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `g(x) = Π_{o < v ≤ x} 1 / p(e_v)` for retention probabilities
/// `p(e) ∈ (0, 1]`.
pub fn gauge_from_percolation(tree: &RootedTree, p: impl Fn(Edge) -> f64) -> Result<Gauge> {
    let mut values = vec![1.0; tree.len()];
    for v in tree.edges() {
        let pe = p(v);
        if !(pe > 0.0 && pe <= 1.0) {
            return Err(invalid(
                "p",
                format!("edge {v}: retention probability must lie in (0, 1], got {pe}"),
            ));
        }
        values[v] = values[tree.parent(v).expect("edge has a parent")] / pe;
    }
    Gauge::from_values(tree, values)
}

/// Effective conductance between the root and the set of vertices at depth
/// `depth`, shorted together, with edge resistances `Δg`.
///
/// A leaf above the boundary contributes nothing; a zero increment is a
/// perfect conductor. Returns `+∞` when a path of perfect conductors joins
/// the root to the boundary.
pub fn effective_conductance(tree: &RootedTree, gauge: &Gauge, depth: usize) -> f64 {
    if depth == 0 {
        return f64::INFINITY;
    }
    let end = tree
        .vertices()
        .rev()
        .find(|&v| tree.depth(v) <= depth)
        .map_or(0, |v| v + 1);
    let mut conductance = vec![0.0f64; end];
    for v in (0..end).rev() {
        if tree.depth(v) == depth {
            conductance[v] = f64::INFINITY;
            continue;
        }
        conductance[v] = tree
            .children(v)
            .map(|c| {
                let below = conductance[c];
                let r = gauge.increment(c);
                if below == 0.0 {
                    0.0
                } else if below.is_infinite() {
                    1.0 / r
                } else {
                    1.0 / (r + 1.0 / below)
                }
            })
            .sum();
    }
    conductance[0]
}

/// Conductances `C_D` for every requested depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceReport {
    pub depths: Vec<usize>,
    pub conductance: Vec<f64>,
}

pub fn conductance_profile(
    tree: &RootedTree,
    gauge: &Gauge,
    depths: &[usize],
) -> ConductanceReport {
    ConductanceReport {
        depths: depths.to_vec(),
        conductance: depths
            .iter()
            .map(|&d| effective_conductance(tree, gauge, d))
            .collect(),
    }
}

/// Tuning of [`branching_number_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchingSettings {
    /// Target width of the final bracket in `q`.
    pub q_tolerance: f64,
    /// Positive capacity is declared when the fitted log-slope of the
    /// resistance increments is below `−decay_slope`.
    pub decay_slope: f64,
    /// Number of points of the coarse scan over `q`.
    pub scan_points: usize,
}

impl Default for BranchingSettings {
    fn default() -> Self {
        Self {
            q_tolerance: 1e-3,
            decay_slope: 0.0,
            scan_points: 24,
        }
    }
}

/// Outcome of [`branching_number_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingEstimate {
    pub branching_number: f64,
    /// Classification boundary in `q`.
    pub q_hat: f64,
    /// Depths used by the fit (the deepest half of `1..=depth`).
    pub window: (usize, usize),
    /// Fitted slope at the upper end of the final bracket.
    pub slope_at_boundary: f64,
    pub settings: BranchingSettings,
}

/// Least-squares slope of `ln(R_k − R_{k−1})` over the deepest half of
/// depths, where `R_k` is the root-to-depth-`k` resistance under the gauge
/// `q^{−|x|}`. `+∞` when the tree dies out inside the window (infinite
/// resistance), `−∞` when the increments vanish.
fn resistance_slope(tree: &RootedTree, depth: usize, q: f64) -> Result<f64> {
    let gauge = Gauge::exponential(tree, q)?;
    let window_start = depth / 2;
    let resistance: Vec<f64> = (window_start..=depth)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                1.0 / effective_conductance(tree, &gauge, k)
            }
        })
        .collect();
    if resistance.iter().any(|r| r.is_infinite()) {
        return Ok(f64::INFINITY);
    }
    let points: Vec<(f64, f64)> = resistance
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let inc = w[1] - w[0];
            (inc > 0.0).then(|| ((window_start + i + 1) as f64, inc.ln()))
        })
        .collect();
    if points.len() < 2 {
        return Ok(f64::NEG_INFINITY);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Finite-volume estimate of the branching number
/// `br(T) = sup{1/q : capacity under q^{−|x|} is positive}`.
///
/// For each `q` the resistance increments to depths in the deepest half of
/// `1..=depth` are fitted log-linearly; a slope below `−decay_slope` means
/// the resistance converges, i.e. positive capacity. A coarse scan checks
/// that the classification switches once, then bisection locates the switch.
/// On spherically symmetric trees the increments are exactly geometric with
/// ratio `1/(q·b)` for branching `b`, so the boundary is exact.
pub fn branching_number_estimate(
    tree: &RootedTree,
    depth: usize,
    settings: BranchingSettings,
) -> Result<BranchingEstimate> {
    if depth < 4 {
        return Err(invalid(
            "depth",
            format!("need depth >= 4 for a slope fit, got {depth}"),
        ));
    }
    if tree.max_depth() < depth {
        return Err(Error::DegenerateSample(format!(
            "tree reaches depth {} only, below the requested {depth}",
            tree.max_depth()
        )));
    }
    if !(settings.q_tolerance > 0.0) || settings.scan_points < 2 {
        return Err(invalid(
            "q_tolerance",
            "needs a positive tolerance and at least two scan points",
        ));
    }
    let positive = |q: f64| -> Result<(bool, f64)> {
        let s = resistance_slope(tree, depth, q)?;
        Ok((s < -settings.decay_slope, s))
    };
    let q_max = 1.0 - 1e-9;
    let scan: Vec<f64> = (1..=settings.scan_points)
        .map(|i| i as f64 / (settings.scan_points as f64 + 1.0))
        .chain(std::iter::once(q_max))
        .collect();
    let verdicts = scan
        .iter()
        .map(|&q| positive(q).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    if verdicts.windows(2).any(|w| w[0] && !w[1]) {
        let listing: Vec<String> = scan
            .iter()
            .zip(&verdicts)
            .map(|(q, v)| format!("{q:.3}:{}", u8::from(*v)))
            .collect();
        return Err(Error::NonMonotone(format!(
            "capacity classification over q: {}",
            listing.join(" ")
        )));
    }
    let window = (depth / 2 + 1, depth);
    let Some(first) = verdicts.iter().position(|&v| v) else {
        // the resistance diverges for every q < 1: no exponential growth
        return Ok(BranchingEstimate {
            branching_number: 1.0,
            q_hat: 1.0,
            window,
            slope_at_boundary: positive(q_max)?.1,
            settings,
        });
    };
    let (mut lo, mut hi) = if first == 0 {
        (0.0, scan[0])
    } else {
        (scan[first - 1], scan[first])
    };
    let mut slope = positive(hi)?.1;
    while hi - lo > settings.q_tolerance {
        let mid = 0.5 * (lo + hi);
        let (pos, s) = positive(mid)?;
        if pos {
            hi = mid;
            slope = s;
        } else {
            lo = mid;
        }
    }
    let q_hat = 0.5 * (lo + hi);
    Ok(BranchingEstimate {
        branching_number: 1.0 / q_hat,
        q_hat,
        window,
        slope_at_boundary: slope,
        settings,
    })
}

/// Result of comparing the branching number of a tree with that of its
/// percolated root components.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub br_before: f64,
    pub br_after_mean: f64,
    pub stderr: f64,
    /// Estimates for the individual components.
    pub br_after: Vec<f64>,
    /// Percolation attempts needed to collect the components.
    pub attempts: usize,
}

/// Compares `br(T)` with the branching numbers of `components` root
/// components produced by `percolate`, which maps a replica key to a
/// component (or `None` when it dies before `depth`). Attempts are capped at
/// `50 × components`.
pub fn branching_gap<F>(
    tree: &RootedTree,
    depth: usize,
    components: usize,
    seed: u64,
    settings: BranchingSettings,
    percolate: F,
) -> Result<ProbeResult>
where
    F: Fn(u64) -> Result<Option<RootedTree>> + Sync,
{
    if components < 2 {
        return Err(invalid(
            "N",
            format!("need at least 2 components, got {components}"),
        ));
    }
    let before = branching_number_estimate(tree, depth, settings)?.branching_number;
    let mut estimates = Vec::with_capacity(components);
    let mut attempts = 0;
    let cap = 50 * components;
    while estimates.len() < components && attempts < cap {
        let batch = (components - estimates.len()).max(8);
        let start = attempts as u64;
        let found = replicate(
            batch,
            seed ^ start.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            |key| match percolate(key)? {
                Some(component) if component.max_depth() >= depth => Ok(Some(
                    branching_number_estimate(&component, depth, settings)?.branching_number,
                )),
                _ => Ok(None),
            },
        )?;
        attempts += batch;
        estimates.extend(
            found
                .into_iter()
                .flatten()
                .take(components - estimates.len()),
        );
    }
    if estimates.len() < components {
        return Err(Error::DegenerateSample(format!(
            "only {} of {components} percolated components reached depth {depth} in {attempts} attempts",
            estimates.len()
        )));
    }
    let est = MeanEstimate::from_samples(&estimates);
    Ok(ProbeResult {
        br_before: before,
        br_after_mean: est.mean,
        stderr: est.stderr,
        br_after: estimates,
        attempts,
    })
}

/// Branching number of `tree` against its root components under
/// `delay_λ ∘ link_λ`: links at rate `λ`, then delayed pruning with degrees
/// measured in the link cluster.
pub fn pruned_branching_probe(
    tree: &RootedTree,
    lambda: f64,
    u: f64,
    depth: usize,
    components: usize,
    seed: u64,
    settings: BranchingSettings,
) -> Result<ProbeResult> {
    let table = PruningTable::new(PruningParams::new(lambda, u)?)?;
    let source = TreeSource::fixed(tree.truncate(depth));
    branching_gap(tree, depth, components, seed, settings, |key| {
        let cluster = explore(&source, Expansion::LinkCluster, lambda, u, depth, key)?;
        if !cluster.frontier_hit {
            return Ok(None);
        }
        let mask = delayed_pruning_mask_keyed(&cluster.tree, &table, &cluster.keys);
        let (component, _) = mask.root_component(&cluster.tree);
        Ok(Some(component))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{generate_kary, generate_regular};

    #[test]
    fn gauge_examples() {
        let t = generate_regular(3, 3).unwrap();
        let ones = gauge_from_percolation(&t, |_| 1.0).unwrap();
        assert!(t
            .vertices()
            .all(|v| ones.value(v) == 1.0 && ones.increment(v) == 0.0));
        let halves = gauge_from_percolation(&t, |_| 0.5).unwrap();
        assert!(t
            .vertices()
            .all(|v| halves.value(v) == 2f64.powi(t.depth(v) as i32)));
        let beta: f64 = 0.7;
        let p = 1.0 - (-beta).exp();
        let link = gauge_from_percolation(&t, |_| p).unwrap();
        let expo = Gauge::exponential(&t, p).unwrap();
        assert!(t
            .vertices()
            .all(|v| (link.value(v) - expo.value(v)).abs() < 1e-12 * expo.value(v)));
        assert!(gauge_from_percolation(&t, |_| 0.0).is_err());
    }

    #[test]
    fn star_conductance() {
        for (d, q) in [(3usize, 0.5), (5, 0.2)] {
            let t = generate_kary(d, 1).unwrap();
            let g = Gauge::exponential(&t, q).unwrap();
            let expected = d as f64 * q / (1.0 - q);
            assert!((effective_conductance(&t, &g, 1) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_conductors_give_infinity() {
        let t = generate_regular(3, 4).unwrap();
        let g = gauge_from_percolation(&t, |_| 1.0).unwrap();
        assert!(effective_conductance(&t, &g, 4).is_infinite());
    }

    #[test]
    fn regular_classification_point() {
        for d in [3usize, 4, 5] {
            let t = generate_regular(d, 10).unwrap();
            let est = branching_number_estimate(&t, 10, BranchingSettings::default()).unwrap();
            assert!(
                (est.q_hat - 1.0 / (d - 1) as f64).abs() < 1e-3,
                "d = {d}: {est:?}"
            );
        }
        let path = generate_regular(2, 12).unwrap();
        let est = branching_number_estimate(&path, 12, BranchingSettings::default()).unwrap();
        assert_eq!(est.branching_number, 1.0);
    }

    #[test]
    fn identity_percolation_leaves_estimate_unchanged() {
        let t = generate_regular(4, 8).unwrap();
        let r = branching_gap(&t, 8, 5, 1, BranchingSettings::default(), |_| {
            Ok(Some(t.clone()))
        })
        .unwrap();
        assert!(r.br_after.iter().all(|&b| b == r.br_before));
        assert_eq!(r.br_after_mean, r.br_before);
    }
}
