//! Multi-link clusters, their loops and the uni-link branching criterion.

use crate::error::{invalid, Error, Result};
use crate::explore::{explore, Expansion, TreeSource};
use crate::links::LinkConfiguration;
use crate::loops::{trace_loop, Direction, LoopPoint, LoopTrace};
use crate::mc::{replicate, MeanEstimate};
use crate::offspring::OffspringLaw;
use crate::tree::{RootedTree, Vertex};

/// Maximal subtree below `root` whose edges all carry at least two links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiLinkCluster {
    pub root: Vertex,
    /// Member vertices, sorted; includes the root.
    pub vertices: Vec<Vertex>,
}

impl MultiLinkCluster {
    pub fn contains(&self, v: Vertex) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    /// Member edges, named by their deeper endpoint.
    pub fn edges(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.vertices
            .iter()
            .copied()
            .filter(move |&v| v != self.root)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn multi_link_cluster(
    tree: &RootedTree,
    config: &LinkConfiguration,
    x: Vertex,
) -> Result<MultiLinkCluster> {
    if !tree.contains(x) {
        return Err(Error::UnknownVertex(x));
    }
    let mut vertices = vec![x];
    let mut stack = vec![x];
    while let Some(v) = stack.pop() {
        for c in tree.children(v).filter(|&c| config.link_count(c) >= 2) {
            vertices.push(c);
            stack.push(c);
        }
    }
    vertices.sort_unstable();
    Ok(MultiLinkCluster { root: x, vertices })
}

/// Loop through `(x, 0)` using only the links on the edges of the
/// multi-link cluster of `x`.
pub fn multi_link_loop(
    tree: &RootedTree,
    config: &LinkConfiguration,
    x: Vertex,
) -> Result<LoopTrace> {
    let cluster = multi_link_cluster(tree, config, x)?;
    multi_link_loop_of(tree, config, &cluster)
}

fn multi_link_loop_of(
    tree: &RootedTree,
    config: &LinkConfiguration,
    cluster: &MultiLinkCluster,
) -> Result<LoopTrace> {
    let members = config.filter_edges(|e, _| e != cluster.root && cluster.contains(e));
    trace_loop(
        tree,
        &members,
        LoopPoint::new(cluster.root, 0.0, Direction::Up),
    )
}

/// Number of edges from a cluster vertex `v` to a child outside the cluster
/// that carry exactly one link, placed at a time when `loop_trace` occupies
/// `v`.
pub fn count_incident_unilinks(
    tree: &RootedTree,
    config: &LinkConfiguration,
    loop_trace: &LoopTrace,
    cluster: &MultiLinkCluster,
) -> usize {
    cluster
        .vertices
        .iter()
        .flat_map(|&v| tree.children(v).map(move |c| (v, c)))
        .filter(|&(v, c)| {
            !cluster.contains(c)
                && matches!(config.links(c), [only] if loop_trace.occupies(v, only.time))
        })
        .count()
}

/// Whether the root reaches depth `depth` in the link cluster pruned at
/// every vertex that has a child edge carrying more than one link.
pub fn unilink_subtree_reaches(
    tree: &RootedTree,
    config: &LinkConfiguration,
    depth: usize,
) -> bool {
    let open = |v: Vertex| tree.children(v).all(|c| config.link_count(c) <= 1);
    if depth == 0 {
        return true;
    }
    if !open(tree.root()) {
        return false;
    }
    let mut stack = vec![tree.root()];
    while let Some(v) = stack.pop() {
        for c in tree.children(v).filter(|&c| config.link_count(c) == 1) {
            if tree.depth(c) >= depth {
                return true;
            }
            if open(c) {
                stack.push(c);
            }
        }
    }
    false
}

/// Monte Carlo summary of the root's uni-link count `C⁽¹⁾(o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnilinkReport {
    pub law: OffspringLaw,
    pub beta: f64,
    pub u: f64,
    pub depth: usize,
    pub replicas: usize,
    pub mean_c1: f64,
    pub stderr: f64,
    /// `mean_c1 − 3·stderr > 1`.
    pub supercritical: bool,
    pub mean_loop_length: f64,
    pub loop_length_stderr: f64,
    /// Replicas whose multi-link cluster touched the depth limit.
    pub truncation_hits: usize,
}

/// Per-replica record used by [`unilink_branching_criterion`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnilinkSample {
    pub c1: usize,
    pub loop_length: f64,
    pub cluster_size: usize,
    pub truncated: bool,
}

/// One replica: explore the multi-link cluster of the root of a fresh
/// Galton-Watson tree together with the uni-links hanging off it.
pub fn unilink_sample(
    source: &TreeSource,
    beta: f64,
    u: f64,
    depth: usize,
    key: u64,
) -> Result<UnilinkSample> {
    let explored = explore(source, Expansion::MultiLink, beta, u, depth, key)?;
    let (tree, links) = (&explored.tree, &explored.links);
    let cluster = multi_link_cluster(tree, links, tree.root())?;
    let gamma = multi_link_loop_of(tree, links, &cluster)?;
    Ok(UnilinkSample {
        c1: count_incident_unilinks(tree, links, &gamma, &cluster),
        loop_length: gamma.length,
        cluster_size: cluster.len(),
        truncated: cluster.vertices.iter().any(|&v| tree.depth(v) >= depth),
    })
}

/// Estimates `E[C⁽¹⁾(o)]` over `replicas` Galton-Watson trees truncated at
/// `depth`; the root's loop is supercritical for uni-link branching when
/// this mean exceeds one.
pub fn unilink_branching_criterion(
    law: &OffspringLaw,
    beta: f64,
    u: f64,
    depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<UnilinkReport> {
    if replicas < 2 {
        return Err(invalid(
            "N",
            format!("need at least 2 replicas, got {replicas}"),
        ));
    }
    let source = TreeSource::galton_watson(law)?;
    let samples = replicate(replicas, seed, |key| {
        unilink_sample(&source, beta, u, depth, key)
    })?;
    let c1: Vec<f64> = samples.iter().map(|s| s.c1 as f64).collect();
    let lengths: Vec<f64> = samples.iter().map(|s| s.loop_length).collect();
    let c1 = MeanEstimate::from_samples(&c1);
    let lengths = MeanEstimate::from_samples(&lengths);
    Ok(UnilinkReport {
        law: law.clone(),
        beta,
        u,
        depth,
        replicas,
        mean_c1: c1.mean,
        stderr: c1.stderr,
        supercritical: c1.mean - 3.0 * c1.stderr > 1.0,
        mean_loop_length: lengths.mean,
        loop_length_stderr: lengths.stderr,
        truncation_hits: samples.iter().filter(|s| s.truncated).count(),
    })
}
