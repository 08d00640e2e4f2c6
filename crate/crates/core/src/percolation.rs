//! Link percolation, pruning probabilities and delayed pruning percolation.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::links::{sample_links_keyed, vertex_keys, LinkConfiguration, LinkKind};
use crate::quadrature::GaussLegendre;
use crate::rng::{combine, stream, tag};
use crate::tree::{Edge, RootedTree, Vertex};

pub const DEFAULT_QUADRATURE_NODES: usize = 256;
const PANEL_ORDER: usize = 16;

/// Rate and cross weight of the pruning construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruningParams {
    pub lambda: f64,
    pub u: f64,
    pub quadrature_nodes: usize,
}

impl PruningParams {
    pub fn new(lambda: f64, u: f64) -> Result<Self> {
        Self::with_nodes(lambda, u, DEFAULT_QUADRATURE_NODES)
    }

    pub fn with_nodes(lambda: f64, u: f64, quadrature_nodes: usize) -> Result<Self> {
        let params = Self {
            lambda,
            u,
            quadrature_nodes,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid(
                "lambda",
                format!("must be finite and > 0, got {}", self.lambda),
            ));
        }
        if !(0.0..=1.0).contains(&self.u) {
            return Err(invalid("u", format!("must lie in [0, 1], got {}", self.u)));
        }
        if self.quadrature_nodes < 64 {
            return Err(invalid(
                "quadrature_nodes",
                format!("must be at least 64, got {}", self.quadrature_nodes),
            ));
        }
        Ok(())
    }

    fn panels(&self) -> usize {
        self.quadrature_nodes.div_ceil(PANEL_ORDER)
    }
}

/// Probability that all links of an edge conditioned to carry at least one
/// link fall into a fixed set of length `allowed`:
/// `(e^{λℓ} − 1) / (e^λ − 1)`.
fn confined(lambda: f64, allowed: f64) -> f64 {
    if lambda <= 1.0 {
        (lambda * allowed).exp_m1() / lambda.exp_m1()
    } else {
        (lambda * (allowed - 1.0)).exp() * (-(-lambda * allowed).exp_m1()) / (-(-lambda).exp_m1())
    }
}

/// Integrand of the pruning probability as a function of the distance
/// `w = |s − t|` between the two links on the pruning edge.
///
/// With crosses the deeper endpoint is exposed on an arc of length `w`, which
/// its `d* − 1` child edges must avoid, and the shallower endpoint on the
/// complement, which its `d − 2` other child edges must avoid. With double
/// bars both endpoints are exposed on the arc of length `1 − w`.
fn pruning_integrand(d: usize, d_star: usize, params: &PruningParams, w: f64) -> f64 {
    let lambda = params.lambda;
    if params.u > 0.0 {
        confined(lambda, 1.0 - w).powi(d_star as i32 - 1) * confined(lambda, w).powi(d as i32 - 2)
    } else {
        confined(lambda, w).powi((d + d_star) as i32 - 3)
    }
}

/// `λ³ e^{−2λ} u² / (2 (1 − e^{−λ})²)`, with `u²` dropped when `u = 0`.
fn pruning_prefactor(params: &PruningParams) -> f64 {
    let lambda = params.lambda;
    let ratio = lambda / lambda.exp_m1();
    let kinds = if params.u > 0.0 {
        params.u * params.u
    } else {
        1.0
    };
    ratio * ratio * lambda / 2.0 * kinds
}

fn vacuous(d: usize, d_star: Option<usize>) -> Option<usize> {
    match d_star {
        Some(ds) if d >= 2 && ds >= 1 => Some(ds),
        _ => None,
    }
}

/// Removal probability `r_λ(x)` of a vertex of degree `d` whose children
/// have minimum degree `d_star`.
///
/// Zero when `d < 2` or the vertex has no children. The double integral over
/// `(s, t) ∈ [0, 1]²` depends only on `|s − t|` and is evaluated as
/// `2 ∫ (1 − w) F(w) dw`.
pub fn pruning_probability(d: usize, d_star: Option<usize>, params: &PruningParams) -> Result<f64> {
    params.validate()?;
    let Some(ds) = vacuous(d, d_star) else {
        return Ok(0.0);
    };
    let rule = GaussLegendre::new(PANEL_ORDER);
    let integral = 2.0
        * rule.integrate(0.0, 1.0, params.panels(), |w| {
            (1.0 - w) * pruning_integrand(d, ds, params, w)
        });
    Ok((pruning_prefactor(params) * integral).clamp(0.0, 1.0))
}

/// [`pruning_probability`] by two-dimensional quadrature over the unit
/// square, split along the diagonal so each triangle has a smooth integrand.
pub fn pruning_probability_2d(
    d: usize,
    d_star: Option<usize>,
    params: &PruningParams,
) -> Result<f64> {
    params.validate()?;
    let Some(ds) = vacuous(d, d_star) else {
        return Ok(0.0);
    };
    let rule = GaussLegendre::new(PANEL_ORDER);
    let panels = params.panels();
    // ∫∫_{t<s} F(s − t) dt ds, doubled by symmetry
    let lower = rule.integrate(0.0, 1.0, panels, |s| {
        rule.integrate(0.0, s, panels, |t| pruning_integrand(d, ds, params, s - t))
    });
    Ok((pruning_prefactor(params) * 2.0 * lower).clamp(0.0, 1.0))
}

/// Memoised pruning probabilities for one parameter set.
#[derive(Debug)]
pub struct PruningTable {
    params: PruningParams,
    cache: RwLock<HashMap<(usize, usize), f64>>,
}

impl PruningTable {
    pub fn new(params: PruningParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &PruningParams {
        &self.params
    }

    pub fn get(&self, d: usize, d_star: Option<usize>) -> f64 {
        let Some(ds) = vacuous(d, d_star) else {
            return 0.0;
        };
        if let Some(&r) = self
            .cache
            .read()
            .expect("pruning cache poisoned")
            .get(&(d, ds))
        {
            return r;
        }
        let r = pruning_probability(d, Some(ds), &self.params)
            .expect("parameters validated on construction");
        self.cache
            .write()
            .expect("pruning cache poisoned")
            .insert((d, ds), r);
        r
    }
}

/// Outcome of a percolation step on a fixed tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PercolationMask {
    /// `removed[v]` marks a deleted vertex; the root is never removed.
    pub removed: Vec<bool>,
    /// `retained[e]` marks a kept edge (entry 0 unused).
    pub retained: Vec<bool>,
}

impl PercolationMask {
    pub fn keep_all(tree: &RootedTree) -> Self {
        Self {
            removed: vec![false; tree.len()],
            retained: vec![true; tree.len()],
        }
    }

    pub fn removed_vertices(&self) -> Vec<Vertex> {
        self.removed
            .iter()
            .enumerate()
            .filter(|(_, r)| **r)
            .map(|(v, _)| v)
            .collect()
    }

    /// Component of the root through kept vertices and retained edges,
    /// relabelled, with the original id of each vertex.
    pub fn root_component(&self, tree: &RootedTree) -> (RootedTree, Vec<Vertex>) {
        tree.root_component(|v| self.retained[v] && !self.removed[v])
    }

    /// Whether the root connects to depth `depth` through kept vertices and
    /// retained edges.
    pub fn reaches_depth(&self, tree: &RootedTree, depth: usize) -> bool {
        reaches_depth_through(tree, depth, |v| self.retained[v] && !self.removed[v])
    }
}

/// Depth-first search for a vertex at depth `depth` reachable from the root
/// through vertices accepted by `open`.
pub fn reaches_depth_through(
    tree: &RootedTree,
    depth: usize,
    mut open: impl FnMut(Vertex) -> bool,
) -> bool {
    if depth == 0 {
        return true;
    }
    let mut stack = vec![tree.root()];
    while let Some(v) = stack.pop() {
        for c in tree.children(v) {
            if open(c) {
                if tree.depth(c) >= depth {
                    return true;
                }
                stack.push(c);
            }
        }
    }
    false
}

/// Component of the root in the subgraph of edges carrying at least one link.
pub fn link_cluster(tree: &RootedTree, config: &LinkConfiguration) -> RootedTree {
    link_cluster_mapped(tree, config).0
}

/// [`link_cluster`] together with the original id of each cluster vertex.
pub fn link_cluster_mapped(
    tree: &RootedTree,
    config: &LinkConfiguration,
) -> (RootedTree, Vec<Vertex>) {
    tree.root_component(|v| config.link_count(v) >= 1)
}

/// Delayed pruning: every vertex at depth 1, 4, 7, … is removed
/// independently with probability `r_λ` computed from its degree and the
/// minimum degree of its children in `tree`. The uniform deciding vertex `v`
/// comes from the stream keyed by `keys[v]`.
pub fn delayed_pruning_mask_keyed(
    tree: &RootedTree,
    table: &PruningTable,
    keys: &[u64],
) -> PercolationMask {
    let mut mask = PercolationMask::keep_all(tree);
    for v in tree.edges() {
        if tree.depth(v) % 3 != 1 {
            continue;
        }
        let r = table.get(tree.degree(v), tree.d_star(v).expect("vertex in tree"));
        if r > 0.0 && pruning_uniform(keys[v]) < r {
            mask.removed[v] = true;
        }
    }
    mask
}

pub(crate) fn pruning_uniform(vertex_key: u64) -> f64 {
    stream(combine(vertex_key, tag::PRUNE)).random()
}

/// [`delayed_pruning_mask_keyed`] with keys drawn from `rng`.
pub fn delayed_pruning_mask<R: Rng + ?Sized>(
    tree: &RootedTree,
    params: &PruningParams,
    rng: &mut R,
) -> Result<PercolationMask> {
    let table = PruningTable::new(*params)?;
    let keys = vertex_keys(tree, rng.random());
    Ok(delayed_pruning_mask_keyed(tree, &table, &keys))
}

/// Survival of `delay ∘ link`: take the link cluster of the root, apply
/// delayed pruning with degrees measured inside the cluster, and test whether
/// the root still reaches depth `depth`.
pub fn compose_link_delay_survival<R: Rng + ?Sized>(
    tree: &RootedTree,
    beta: f64,
    params: &PruningParams,
    depth: usize,
    rng: &mut R,
) -> Result<bool> {
    if (params.lambda - beta).abs() > 1e-12 * beta.max(1.0) {
        return Err(invalid(
            "lambda",
            "the coupling uses the link rate beta as pruning rate",
        ));
    }
    let table = PruningTable::new(*params)?;
    let root_key: u64 = rng.random();
    let config = sample_links_keyed(tree, beta, params.u, root_key)?;
    let keys = vertex_keys(tree, root_key);
    Ok(link_delay_reaches(tree, &config, &table, &keys, depth))
}

/// Depth test of `delay ∘ link` on a sampled configuration; `keys` are the
/// vertex keys of `tree` used for the pruning uniforms.
pub fn link_delay_reaches(
    tree: &RootedTree,
    config: &LinkConfiguration,
    table: &PruningTable,
    keys: &[u64],
    depth: usize,
) -> bool {
    let (cluster, original) = link_cluster_mapped(tree, config);
    if cluster.max_depth() < depth {
        return false;
    }
    let cluster_keys: Vec<u64> = original.iter().map(|&v| keys[v]).collect();
    delayed_pruning_mask_keyed(&cluster, table, &cluster_keys).reaches_depth(&cluster, depth)
}

/// Whether edge `e` is pruning for the loop of the root.
///
/// The edge must carry exactly two crosses (two double bars when `u = 0`).
/// The loop reaches the shallower endpoint `x` through the single link on
/// `x`'s parent edge, or starts there at time 0 when `x` is the root; that
/// time picks the arc of `x`'s circle the loop uses. With crosses the deeper
/// endpoint is exposed on the other arc, with double bars on the same arc.
/// Pruning means the other edges at `x` and the child edges of the deeper
/// endpoint carry no links inside the respective exposed arcs.
pub fn is_pruning_edge(tree: &RootedTree, config: &LinkConfiguration, e: Edge) -> Result<bool> {
    tree.check_edge(e)?;
    let want = if config.u() > 0.0 {
        LinkKind::Cross
    } else {
        LinkKind::Bar
    };
    let [first, second] = config.links(e) else {
        return Ok(false);
    };
    if first.kind != want || second.kind != want {
        return Ok(false);
    }
    let (low, high) = (first.time, second.time);
    let x = tree.parent(e).expect("edge has a parent");
    let reference = match tree.parent(x) {
        None => 0.0,
        Some(_) => match config.links(x) {
            [only] => only.time,
            _ => return Ok(false),
        },
    };
    let inner = |t: f64| low < t && t < high;
    let outer = |t: f64| t < low || t > high;
    let x_inner = inner(reference);
    let in_x_arc = |t: f64| if x_inner { inner(t) } else { outer(t) };
    let y_inner = if want == LinkKind::Cross {
        !x_inner
    } else {
        x_inner
    };
    let in_y_arc = |t: f64| if y_inner { inner(t) } else { outer(t) };
    let siblings_clear = tree
        .children(x)
        .filter(|&s| s != e)
        .all(|s| config.links(s).iter().all(|l| !in_x_arc(l.time)));
    let children_clear = tree
        .children(e)
        .all(|c| config.links(c).iter().all(|l| !in_y_arc(l.time)));
    Ok(siblings_clear && children_clear)
}

/// Monte Carlo estimate of the pruning probability by direct simulation of
/// the event behind it, given degree `d` of the shallower endpoint and
/// degree `d_star` of the deeper one, with every involved edge conditioned to
/// carry at least one link. Returns the estimate and its standard error.
pub fn verify_pruning_probability_mc<R: Rng + ?Sized>(
    d: usize,
    d_star: usize,
    params: &PruningParams,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    params.validate()?;
    if d < 2 {
        return Err(invalid("d", format!("must be at least 2, got {d}")));
    }
    if d_star < 1 {
        return Err(invalid(
            "d_star",
            format!("must be at least 1, got {d_star}"),
        ));
    }
    if samples < 1000 {
        return Err(invalid(
            "samples",
            format!("must be at least 1000, got {samples}"),
        ));
    }
    let lambda = params.lambda;
    let want_cross = params.u > 0.0;
    let mut hits = 0usize;
    let mut times = Vec::new();
    for _ in 0..samples {
        if retained_count(lambda, rng) != 1 {
            continue;
        }
        let reference: f64 = rng.random();
        if retained_count(lambda, rng) != 2 {
            continue;
        }
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let both_crosses = rng.random::<f64>() < params.u && rng.random::<f64>() < params.u;
        // u = 0 needs two bars, which is automatic
        if want_cross && !both_crosses {
            continue;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        // arcs are [lo, hi) and its complement; the shallower endpoint uses
        // the one holding the reference time
        let x_on_inner = lo <= reference && reference < hi;
        let y_on_inner = if want_cross { !x_on_inner } else { x_on_inner };
        let avoids = |on_inner: bool, t: f64| (lo <= t && t < hi) != on_inner;
        let mut ok = true;
        for group in [(d - 2, x_on_inner), (d_star - 1, y_on_inner)] {
            for _ in 0..group.0 {
                times.clear();
                let m = retained_count(lambda, rng);
                times.extend((0..m).map(|_| rng.random::<f64>()));
                if !times.iter().all(|&t| avoids(group.1, t)) {
                    ok = false;
                }
            }
        }
        if ok {
            hits += 1;
        }
    }
    let n = samples as f64;
    let p = hits as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// `Poisson(λ)` conditioned on being at least one, by inversion.
fn retained_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    let empty = (-lambda).exp();
    let v = empty + rng.random::<f64>() * (1.0 - empty);
    crate::offspring::poisson_inverse(lambda, v).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::{sample_links, Link};
    use crate::rng::stream;
    use crate::tree::{generate_kary, generate_regular};

    fn params(lambda: f64, u: f64) -> PruningParams {
        PruningParams::new(lambda, u).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(PruningParams::new(0.0, 1.0).is_err());
        assert!(PruningParams::new(1.0, -0.1).is_err());
        assert!(PruningParams::with_nodes(1.0, 1.0, 32).is_err());
    }

    #[test]
    fn vacuous_cases_are_zero() {
        let p = params(1.0, 1.0);
        assert_eq!(pruning_probability(1, Some(3), &p).unwrap(), 0.0);
        assert_eq!(pruning_probability(3, None, &p).unwrap(), 0.0);
    }

    #[test]
    fn two_one_is_the_prefactor() {
        for (lambda, u) in [(0.3, 1.0), (1.0, 0.5), (2.0, 0.0)] {
            let p = params(lambda, u);
            let direct = lambda.powi(3) * (-2.0 * lambda).exp() * if u > 0.0 { u * u } else { 1.0 }
                / (2.0 * (1.0 - (-lambda).exp()).powi(2));
            assert!((pruning_probability(2, Some(1), &p).unwrap() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn one_and_two_dimensional_routes_agree() {
        for (d, ds) in [(2, 1), (3, 3), (4, 2), (5, 5), (8, 8)] {
            for lambda in [0.2, 1.0, 5.0, 50.0] {
                for u in [0.0, 0.5, 1.0] {
                    let p = params(lambda, u);
                    let one = pruning_probability(d, Some(ds), &p).unwrap();
                    let two = pruning_probability_2d(d, Some(ds), &p).unwrap();
                    assert!(
                        (one - two).abs() < 1e-10,
                        "{d} {ds} {lambda} {u}: {one} {two}"
                    );
                }
            }
        }
    }

    #[test]
    fn monotone_in_degrees() {
        let p = params(1.0, 1.0);
        let r = |d, ds| pruning_probability(d, Some(ds), &p).unwrap();
        assert!(r(3, 3) >= r(5, 3) && r(5, 3) >= r(5, 5));
    }

    #[test]
    fn vanishes_linearly_for_small_rate() {
        // r ~ (λ/2) u² E[…] as λ → 0
        let r = |lambda: f64| pruning_probability(3, Some(3), &params(lambda, 1.0)).unwrap();
        assert!(r(1e-4) < 1e-4);
        let ratio = r(1e-4) / r(2e-4);
        assert!((ratio - 0.5).abs() < 1e-3);
    }

    #[test]
    fn pruning_edge_examples() {
        let t = generate_kary(2, 2).unwrap();
        let mut lists = vec![Vec::new(); t.len()];
        lists[1] = vec![Link::cross(0.3)];
        let c = LinkConfiguration::from_edge_lists(&t, 1.0, 1.0, lists.clone()).unwrap();
        assert!(!is_pruning_edge(&t, &c, 1).unwrap());
        lists[1] = vec![Link::cross(0.3), Link::cross(0.6)];
        let c = LinkConfiguration::from_edge_lists(&t, 1.0, 1.0, lists.clone()).unwrap();
        assert!(is_pruning_edge(&t, &c, 1).unwrap());
        // a sibling link inside the root's exposed arc (which holds time 0)
        lists[2] = vec![Link::cross(0.9)];
        let c = LinkConfiguration::from_edge_lists(&t, 1.0, 1.0, lists.clone()).unwrap();
        assert!(!is_pruning_edge(&t, &c, 1).unwrap());
        assert!(is_pruning_edge(&t, &c, 0).is_err());
    }

    #[test]
    fn link_cluster_extremes() {
        let t = generate_regular(3, 4).unwrap();
        let none = LinkConfiguration::empty(&t, 1.0, 1.0);
        assert_eq!(link_cluster(&t, &none).len(), 1);
        let lists = (0..t.len())
            .map(|v| {
                if v == 0 {
                    vec![]
                } else {
                    vec![Link::cross(0.5)]
                }
            })
            .collect();
        let all = LinkConfiguration::from_edge_lists(&t, 1.0, 1.0, lists).unwrap();
        assert_eq!(link_cluster(&t, &all), t);
    }

    #[test]
    fn delayed_pruning_only_touches_depths_one_mod_three() {
        let t = generate_regular(3, 2).unwrap();
        let p = params(1.0, 1.0);
        for seed in 0..200 {
            let mask = delayed_pruning_mask(&t, &p, &mut stream(seed)).unwrap();
            assert!(mask.removed_vertices().iter().all(|&v| t.depth(v) == 1));
        }
        let tiny = params(1e-9, 1.0);
        let mask =
            delayed_pruning_mask(&generate_regular(4, 5).unwrap(), &tiny, &mut stream(1)).unwrap();
        assert!(mask.removed_vertices().is_empty());
    }

    #[test]
    fn loop_never_enters_below_a_pruning_edge() {
        let t = generate_regular(3, 5).unwrap();
        let mut checked = 0;
        for seed in 0..20_000u64 {
            let c = sample_links(&t, 1.0, 1.0, &mut stream(seed)).unwrap();
            let l = crate::loops::root_loop(&t, &c).unwrap();
            for e in t.edges() {
                if is_pruning_edge(&t, &c, e).unwrap() {
                    checked += 1;
                    for below in t.children(e) {
                        assert!(!l.visits(below), "seed {seed} edge {e}");
                    }
                }
            }
        }
        assert!(checked > 1000, "only {checked} pruning edges seen");
    }
}
