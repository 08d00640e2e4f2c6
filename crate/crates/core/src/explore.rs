//! Lazy breadth-first exploration of a tree together with its links.
//!
//! Large or random trees are never materialised in full: offspring numbers
//! and edge links are drawn from streams keyed by the vertex path, and only
//! the part of the tree selected by an [`Expansion`] rule is built. Keys
//! follow [`crate::links::vertex_keys`], so exploring a [`TreeSource::Fixed`]
//! tree sees exactly the links of [`crate::links::sample_links_keyed`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::links::{check_beta_u, edge_stream, sample_edge_links, Link, LinkConfiguration};
use crate::offspring::{OffspringLaw, OffspringSampler};
use crate::rng::{combine, stream, tag};
use crate::tree::{RootedTree, Vertex};

/// Where offspring numbers come from.
#[derive(Debug, Clone)]
pub enum TreeSource {
    /// Root with `d` children, every other vertex with `d − 1`.
    Regular(usize),
    /// Every vertex with `k` children.
    Kary(usize),
    /// Fresh Galton-Watson tree per root key.
    GaltonWatson(OffspringSampler),
    /// One given tree for every root key.
    Fixed(Arc<RootedTree>),
}

impl TreeSource {
    pub fn regular(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(invalid("d", format!("regular tree needs d >= 2, got {d}")));
        }
        Ok(TreeSource::Regular(d))
    }

    pub fn kary(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k", "k-ary tree needs k >= 1"));
        }
        Ok(TreeSource::Kary(k))
    }

    pub fn galton_watson(law: &OffspringLaw) -> Result<Self> {
        Ok(TreeSource::GaltonWatson(OffspringSampler::new(law)?))
    }

    pub fn fixed(tree: RootedTree) -> Self {
        TreeSource::Fixed(Arc::new(tree))
    }

    /// Mean number of children of a non-root vertex, when known.
    pub fn mean_offspring(&self) -> Option<f64> {
        match self {
            TreeSource::Regular(d) => Some(*d as f64 - 1.0),
            TreeSource::Kary(k) => Some(*k as f64),
            TreeSource::GaltonWatson(s) => Some(s.law().mean()),
            TreeSource::Fixed(_) => None,
        }
    }

    /// The tree seen from `root_key` down to `depth`, without links. For a
    /// Galton-Watson source this is the tree every exploration from that key
    /// runs on.
    pub fn materialize(&self, depth: usize, root_key: u64) -> Result<RootedTree> {
        let mut handles = vec![Handle {
            key: root_key,
            depth: 0,
            original: 0,
            expand: true,
        }];
        let mut counts = Vec::new();
        let mut head = 0;
        while head < handles.len() {
            let h = handles[head];
            head += 1;
            let n = if h.depth < depth {
                self.child_count(&h)
            } else {
                0
            };
            counts.push(n);
            for i in 0..n {
                handles.push(Handle {
                    key: combine(h.key, i as u64 + 1),
                    depth: h.depth + 1,
                    original: self.child_original(&h, i),
                    expand: true,
                });
            }
            if handles.len() > EXPLORATION_LIMIT {
                return Err(invalid(
                    "depth",
                    format!("tree exceeds {EXPLORATION_LIMIT} vertices; lower the depth"),
                ));
            }
        }
        Ok(RootedTree::from_child_counts(&counts).expect("built in breadth-first order"))
    }

    fn child_count(&self, handle: &Handle) -> usize {
        match self {
            TreeSource::Regular(d) => {
                if handle.depth == 0 {
                    *d
                } else {
                    d - 1
                }
            }
            TreeSource::Kary(k) => *k,
            TreeSource::GaltonWatson(sampler) => {
                sampler.sample(&mut stream(combine(handle.key, tag::OFFSPRING)))
            }
            TreeSource::Fixed(tree) => tree.child_count(handle.original),
        }
    }

    fn child_original(&self, handle: &Handle, i: usize) -> Vertex {
        match self {
            TreeSource::Fixed(tree) => tree.children(handle.original).start + i,
            _ => 0,
        }
    }
}

/// Parses `regular:<d>`, `kary:<k>` and `gw:<law>` with a law in the
/// [`OffspringLaw`] syntax, e.g. `gw:poisson:3`.
impl FromStr for TreeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| invalid("tree", format!("expected kind:parameters, got `{s}`")))?;
        let count = |what: &str| -> Result<usize> {
            rest.trim().parse().map_err(|_| {
                invalid(
                    "tree",
                    format!("{what} must be a non-negative integer, got `{rest}`"),
                )
            })
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "regular" => TreeSource::regular(count("degree")?),
            "kary" => TreeSource::kary(count("branching")?),
            "gw" | "galton-watson" => TreeSource::galton_watson(&rest.parse()?),
            other => Err(invalid(
                "tree",
                format!("unknown tree kind `{other}` (regular, kary, gw)"),
            )),
        }
    }
}

impl fmt::Display for TreeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeSource::Regular(d) => write!(f, "regular:{d}"),
            TreeSource::Kary(k) => write!(f, "kary:{k}"),
            TreeSource::GaltonWatson(s) => write!(f, "gw:{}", s.law()),
            TreeSource::Fixed(t) => write!(f, "fixed:{}", t.len()),
        }
    }
}

/// Which explored children are kept and which are expanded further.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// Keep and expand every child.
    Full,
    /// Keep and expand children whose edge carries a link.
    LinkCluster,
    /// Expand children whose edge carries two or more links; keep children
    /// with exactly one link as unexpanded leaves; drop the rest.
    MultiLink,
}

/// Explorations larger than this are refused rather than exhausting memory.
pub const EXPLORATION_LIMIT: usize = 1 << 26;

#[derive(Debug, Clone, Copy)]
struct Handle {
    key: u64,
    depth: usize,
    original: Vertex,
    expand: bool,
}

/// Result of an exploration. `links` holds every link on the kept edges;
/// `keys[v]` is the stream key of explored vertex `v`.
#[derive(Debug, Clone)]
pub struct Explored {
    pub tree: RootedTree,
    pub links: LinkConfiguration,
    pub keys: Vec<u64>,
    /// For a fixed source, the id of each explored vertex in that tree
    /// (zero for generated sources).
    pub original: Vec<Vertex>,
    /// Whether some kept vertex sits at the depth limit.
    pub frontier_hit: bool,
}

/// Explores from a root with key `root_key` down to depth `depth`, sampling
/// links at rate `beta` with cross weight `u`.
pub fn explore(
    source: &TreeSource,
    expansion: Expansion,
    beta: f64,
    u: f64,
    depth: usize,
    root_key: u64,
) -> Result<Explored> {
    check_beta_u(beta, u)?;
    let mut handles = vec![Handle {
        key: root_key,
        depth: 0,
        original: 0,
        expand: true,
    }];
    let mut counts = Vec::new();
    let mut offsets = vec![0, 0];
    let mut links: Vec<Link> = Vec::new();
    let mut scratch = Vec::new();
    let mut head = 0;
    let mut frontier_hit = depth == 0;
    while head < handles.len() {
        let h = handles[head];
        head += 1;
        let mut kept = 0;
        if h.expand && h.depth < depth {
            let n = source.child_count(&h);
            for i in 0..n {
                let key = combine(h.key, i as u64 + 1);
                scratch.clear();
                sample_edge_links(beta, u, &mut edge_stream(key), &mut scratch);
                let (keep, expand) = match expansion {
                    Expansion::Full => (true, true),
                    Expansion::LinkCluster => (!scratch.is_empty(), true),
                    Expansion::MultiLink => (!scratch.is_empty(), scratch.len() >= 2),
                };
                if !keep {
                    continue;
                }
                kept += 1;
                links.extend_from_slice(&scratch);
                offsets.push(links.len());
                if h.depth + 1 == depth {
                    frontier_hit = true;
                }
                handles.push(Handle {
                    key,
                    depth: h.depth + 1,
                    original: source.child_original(&h, i),
                    expand,
                });
            }
        }
        counts.push(kept);
        if handles.len() > EXPLORATION_LIMIT {
            return Err(invalid(
                "depth",
                format!("exploration exceeded {EXPLORATION_LIMIT} vertices; lower the depth or the rate"),
            ));
        }
    }
    let tree = RootedTree::from_child_counts(&counts).expect("explored in breadth-first order");
    let links = LinkConfiguration::from_parts(beta, u, offsets, links);
    Ok(Explored {
        tree,
        links,
        keys: handles.iter().map(|h| h.key).collect(),
        original: handles.iter().map(|h| h.original).collect(),
        frontier_hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::sample_links_keyed;
    use crate::percolation::link_cluster_mapped;
    use crate::tree::generate_regular;

    #[test]
    fn parses_tree_specs() {
        for spec in ["regular:4", "kary:5", "gw:poisson:3", "gw:binomial:10:0.3"] {
            assert_eq!(spec.parse::<TreeSource>().unwrap().to_string(), spec);
        }
        for bad in ["regular:1", "regular", "star:3", "gw:poisson:-1", "kary:x"] {
            assert!(bad.parse::<TreeSource>().is_err(), "{bad}");
        }
    }

    #[test]
    fn materialized_tree_is_the_explored_tree() {
        let source: TreeSource = "gw:poisson:2".parse().unwrap();
        for key in 0..30u64 {
            let full = explore(&source, Expansion::Full, 0.7, 1.0, 6, key).unwrap();
            assert_eq!(source.materialize(6, key).unwrap(), full.tree);
        }
        assert_eq!(
            TreeSource::regular(3).unwrap().materialize(3, 0).unwrap(),
            generate_regular(3, 3).unwrap()
        );
    }

    #[test]
    fn fixed_source_matches_direct_sampling() {
        let tree = generate_regular(3, 6).unwrap();
        let source = TreeSource::fixed(tree.clone());
        for key in 0..100u64 {
            let direct = sample_links_keyed(&tree, 0.8, 0.5, key).unwrap();
            let (cluster, original) = link_cluster_mapped(&tree, &direct);
            let lazy = explore(&source, Expansion::LinkCluster, 0.8, 0.5, 6, key).unwrap();
            assert_eq!(lazy.tree, cluster);
            assert_eq!(lazy.original, original);
            assert_eq!(lazy.links, direct.restrict(&original));
        }
    }

    #[test]
    fn regular_source_matches_fixed_source() {
        let tree = generate_regular(4, 4).unwrap();
        let fixed = TreeSource::fixed(tree);
        let lazy = TreeSource::regular(4).unwrap();
        for key in 0..50u64 {
            let a = explore(&fixed, Expansion::Full, 1.0, 1.0, 4, key).unwrap();
            let b = explore(&lazy, Expansion::Full, 1.0, 1.0, 4, key).unwrap();
            assert_eq!(a.tree, b.tree);
            assert_eq!(a.links, b.links);
        }
    }

    #[test]
    fn galton_watson_is_reproducible_and_nested_in_beta() {
        let source = TreeSource::galton_watson(&OffspringLaw::Poisson(2.0)).unwrap();
        for key in 0..50u64 {
            let a = explore(&source, Expansion::LinkCluster, 0.4, 1.0, 8, key).unwrap();
            let b = explore(&source, Expansion::LinkCluster, 0.4, 1.0, 8, key).unwrap();
            assert_eq!(a.tree, b.tree);
            let c = explore(&source, Expansion::LinkCluster, 0.9, 1.0, 8, key).unwrap();
            assert!(c.tree.len() >= a.tree.len());
            assert!(a.keys.iter().all(|k| c.keys.contains(k)));
        }
    }

    #[test]
    fn multilink_keeps_unilinks_as_leaves() {
        let source = TreeSource::kary(3).unwrap();
        for key in 0..100u64 {
            let e = explore(&source, Expansion::MultiLink, 1.0, 1.0, 6, key).unwrap();
            for v in e.tree.edges() {
                let m = e.links.link_count(v);
                assert!(m >= 1);
                if m == 1 {
                    assert_eq!(e.tree.child_count(v), 0);
                }
            }
        }
    }
}
