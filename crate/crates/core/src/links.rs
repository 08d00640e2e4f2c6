//! Poisson link configurations on the edge time circles `[0, 1)`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::offspring::poisson_inverse;
use crate::rng::{combine, stream, tag, StreamRng};
use crate::tree::{Edge, RootedTree, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    /// Moves the trajectory to the other endpoint keeping its time direction.
    Cross,
    /// Double bar: moves to the other endpoint and reverses time direction.
    Bar,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Cross => "cross",
            LinkKind::Bar => "bar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub time: f64,
    pub kind: LinkKind,
}

impl Link {
    pub fn cross(time: f64) -> Self {
        Self {
            time,
            kind: LinkKind::Cross,
        }
    }

    pub fn bar(time: f64) -> Self {
        Self {
            time,
            kind: LinkKind::Bar,
        }
    }
}

/// Links of every edge of a tree, stored edge by edge with each edge's list
/// strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfiguration {
    beta: f64,
    u: f64,
    offsets: Vec<usize>,
    links: Vec<Link>,
}

pub(crate) fn check_beta_u(beta: f64, u: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid(
            "beta",
            format!("must be finite and > 0, got {beta}"),
        ));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(invalid("u", format!("must lie in [0, 1], got {u}")));
    }
    Ok(())
}

impl LinkConfiguration {
    /// Configuration with no links at all.
    pub fn empty(tree: &RootedTree, beta: f64, u: f64) -> Self {
        Self {
            beta,
            u,
            offsets: vec![0; tree.len() + 1],
            links: Vec::new(),
        }
    }

    /// Builds a configuration from explicit per-edge link lists, indexed by
    /// vertex id (entry 0, the root, must be empty). Lists are sorted here;
    /// times outside `[0, 1)` or repeated on one edge are rejected.
    pub fn from_edge_lists(
        tree: &RootedTree,
        beta: f64,
        u: f64,
        mut lists: Vec<Vec<Link>>,
    ) -> Result<Self> {
        if lists.len() != tree.len() {
            return Err(invalid(
                "links",
                format!("expected {} edge lists, got {}", tree.len(), lists.len()),
            ));
        }
        if !lists[0].is_empty() {
            return Err(invalid("links", "the root has no parent edge"));
        }
        let mut offsets = Vec::with_capacity(tree.len() + 1);
        let mut links = Vec::new();
        offsets.push(0);
        for (e, list) in lists.iter_mut().enumerate() {
            list.sort_by(|a, b| a.time.total_cmp(&b.time));
            if list.iter().any(|l| !(0.0..1.0).contains(&l.time)) {
                return Err(invalid(
                    "links",
                    format!("edge {e}: link time outside [0, 1)"),
                ));
            }
            if list.windows(2).any(|w| w[0].time == w[1].time) {
                return Err(invalid(
                    "links",
                    format!("edge {e}: two links share a time"),
                ));
            }
            links.extend_from_slice(list);
            offsets.push(links.len());
        }
        Ok(Self {
            beta,
            u,
            offsets,
            links,
        })
    }

    pub(crate) fn from_parts(beta: f64, u: f64, offsets: Vec<usize>, links: Vec<Link>) -> Self {
        Self {
            beta,
            u,
            offsets,
            links,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    /// Number of vertices of the underlying tree.
    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Links on the edge above vertex `e`, sorted by time. Empty for the root.
    pub fn links(&self, e: Edge) -> &[Link] {
        &self.links[self.offsets[e]..self.offsets[e + 1]]
    }

    /// Index of the first link of edge `e` in [`LinkConfiguration::all_links`].
    pub fn link_offset(&self, e: Edge) -> usize {
        self.offsets[e]
    }

    pub fn all_links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_count(&self, e: Edge) -> usize {
        self.offsets[e + 1] - self.offsets[e]
    }

    pub fn total_links(&self) -> usize {
        self.links.len()
    }

    /// Whether the edge carries at least one link.
    pub fn is_retained(&self, e: Edge) -> Result<bool> {
        if e == 0 || e >= self.vertex_count() {
            return Err(Error::UnknownEdge(e));
        }
        Ok(self.link_count(e) >= 1)
    }

    /// Copy keeping only the edges for which `keep` holds.
    pub fn filter_edges(&self, mut keep: impl FnMut(Edge, &[Link]) -> bool) -> Self {
        let mut offsets = Vec::with_capacity(self.offsets.len());
        let mut links = Vec::new();
        offsets.push(0);
        for e in 0..self.vertex_count() {
            let list = self.links(e);
            if e > 0 && keep(e, list) {
                links.extend_from_slice(list);
            }
            offsets.push(links.len());
        }
        Self::from_parts(self.beta, self.u, offsets, links)
    }

    /// Configuration on a relabelled subtree, where `original[v]` is the
    /// vertex of this configuration's tree that new vertex `v` came from.
    pub fn restrict(&self, original: &[Vertex]) -> Self {
        let mut offsets = Vec::with_capacity(original.len() + 1);
        let mut links = Vec::new();
        offsets.push(0);
        for (v, &old) in original.iter().enumerate() {
            if v > 0 {
                links.extend_from_slice(self.links(old));
            }
            offsets.push(links.len());
        }
        Self::from_parts(self.beta, self.u, offsets, links)
    }

    /// `edge_child_id,time,kind` rows sorted by edge then time, with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge_child_id,time,kind\n");
        for e in 1..self.vertex_count() {
            for l in self.links(e) {
                writeln!(out, "{e},{},{}", l.time, l.kind.as_str())
                    .expect("writing to a String cannot fail");
            }
        }
        out
    }
}

/// Draws the links of one edge: `Poisson(β)` many links with uniform times,
/// each a cross with probability `u`, sorted by time.
///
/// The count comes from the first uniform by inversion and the links are the
/// first entries of a fixed sequence of (time, kind) pairs, so with the same
/// stream a larger `β` yields a superset of links. Configurations with a
/// repeated time are redrawn from the continuing stream.
pub fn sample_edge_links<R: Rng + ?Sized>(beta: f64, u: f64, rng: &mut R, out: &mut Vec<Link>) {
    let start = out.len();
    loop {
        out.truncate(start);
        let count = poisson_inverse(beta, rng.random::<f64>());
        for _ in 0..count {
            let time: f64 = rng.random();
            let kind = if rng.random::<f64>() < u {
                LinkKind::Cross
            } else {
                LinkKind::Bar
            };
            out.push(Link { time, kind });
        }
        let list = &mut out[start..];
        list.sort_by(|a, b| a.time.total_cmp(&b.time));
        if list.windows(2).all(|w| w[0].time < w[1].time) {
            return;
        }
    }
}

/// Per-edge random stream for the edge above a vertex with the given key.
pub fn edge_stream(vertex_key: u64) -> StreamRng {
    stream(combine(vertex_key, tag::LINKS))
}

/// Keys of all vertices: the root gets `root_key` and the `i`-th child of a
/// vertex with key `k` gets `combine(k, i + 1)`. Lazy exploration uses the
/// same rule, so both routes see identical links on a common tree.
pub fn vertex_keys(tree: &RootedTree, root_key: u64) -> Vec<u64> {
    let mut keys = vec![root_key; tree.len()];
    for v in tree.vertices() {
        for (i, c) in tree.children(v).enumerate() {
            keys[c] = combine(keys[v], i as u64 + 1);
        }
    }
    keys
}

/// Samples independent link processes on every edge: crosses at rate `uβ`
/// and double bars at rate `(1 − u)β`.
pub fn sample_links<R: Rng + ?Sized>(
    tree: &RootedTree,
    beta: f64,
    u: f64,
    rng: &mut R,
) -> Result<LinkConfiguration> {
    sample_links_keyed(tree, beta, u, rng.random())
}

/// Like [`sample_links`] with every edge driven by its own keyed stream, so
/// the same `root_key` at a larger `β` gives a pathwise superset of links.
pub fn sample_links_keyed(
    tree: &RootedTree,
    beta: f64,
    u: f64,
    root_key: u64,
) -> Result<LinkConfiguration> {
    check_beta_u(beta, u)?;
    let keys = vertex_keys(tree, root_key);
    let mut offsets = Vec::with_capacity(tree.len() + 1);
    let mut links = Vec::new();
    offsets.push(0);
    offsets.push(0);
    for e in tree.edges() {
        sample_edge_links(beta, u, &mut edge_stream(keys[e]), &mut links);
        offsets.push(links.len());
    }
    Ok(LinkConfiguration::from_parts(beta, u, offsets, links))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tree::{generate_kary, generate_regular};

    fn edge_tree() -> RootedTree {
        generate_kary(1, 1).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let t = edge_tree();
        assert!(sample_links(&t, 0.0, 0.5, &mut stream(1)).is_err());
        assert!(sample_links(&t, 1.0, 1.5, &mut stream(1)).is_err());
    }

    #[test]
    fn tiny_beta_gives_no_links() {
        let t = generate_regular(3, 4).unwrap();
        let cfg = sample_links(&t, 1e-9, 1.0, &mut stream(2)).unwrap();
        assert_eq!(cfg.total_links(), 0);
    }

    #[test]
    fn single_edge_count_and_kind_means() {
        let t = edge_tree();
        let n = 100_000;
        let mut rng = stream(3);
        let (mut total, mut bars) = (0usize, 0usize);
        for _ in 0..n {
            let cfg = sample_links(&t, 2.0, 1.0, &mut rng).unwrap();
            total += cfg.link_count(1);
            bars += cfg
                .links(1)
                .iter()
                .filter(|l| l.kind == LinkKind::Bar)
                .count();
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
        assert_eq!(bars, 0);

        let (mut crosses, mut all) = (0usize, 0usize);
        for _ in 0..n {
            let cfg = sample_links(&t, 1.0, 0.3, &mut rng).unwrap();
            all += cfg.link_count(1);
            crosses += cfg
                .links(1)
                .iter()
                .filter(|l| l.kind == LinkKind::Cross)
                .count();
        }
        let frac = crosses as f64 / all as f64;
        assert!((frac - 0.3).abs() < 3.0 * (0.21 / all as f64).sqrt());
    }

    #[test]
    fn retention_frequency() {
        let t = edge_tree();
        let n = 100_000;
        let mut rng = stream(4);
        let kept = (0..n)
            .filter(|_| {
                sample_links(&t, 0.5, 0.5, &mut rng)
                    .unwrap()
                    .is_retained(1)
                    .unwrap()
            })
            .count();
        let p = 1.0 - (-0.5f64).exp();
        let freq = kept as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn retained_examples_and_lookup_errors() {
        let t = edge_tree();
        let empty = LinkConfiguration::empty(&t, 1.0, 1.0);
        assert!(!empty.is_retained(1).unwrap());
        let one_bar =
            LinkConfiguration::from_edge_lists(&t, 1.0, 0.0, vec![vec![], vec![Link::bar(0.4)]])
                .unwrap();
        assert!(one_bar.is_retained(1).unwrap());
        assert!(matches!(one_bar.is_retained(0), Err(Error::UnknownEdge(0))));
        assert!(matches!(one_bar.is_retained(2), Err(Error::UnknownEdge(2))));
        assert!(LinkConfiguration::from_edge_lists(
            &t,
            1.0,
            0.0,
            vec![vec![], vec![Link::bar(0.4), Link::cross(0.4)]]
        )
        .is_err());
    }

    #[test]
    fn total_link_mean_and_sorting() {
        let t = generate_regular(3, 3).unwrap();
        let edges = (t.len() - 1) as f64;
        let n = 20_000;
        let mut rng = stream(5);
        let mut total = 0usize;
        for _ in 0..n {
            let cfg = sample_links(&t, 0.7, 0.5, &mut rng).unwrap();
            total += cfg.total_links();
            for e in t.edges() {
                assert!(cfg.links(e).windows(2).all(|w| w[0].time < w[1].time));
                assert!(cfg.links(e).iter().all(|l| (0.0..1.0).contains(&l.time)));
            }
        }
        let mean = total as f64 / n as f64;
        let se = (0.7 * edges / n as f64).sqrt();
        assert!((mean - 0.7 * edges).abs() < 3.0 * se);
    }

    #[test]
    fn keyed_sampling_nests_in_beta() {
        let t = generate_regular(3, 5).unwrap();
        for key in 0..50u64 {
            let small = sample_links_keyed(&t, 0.3, 0.6, key).unwrap();
            let large = sample_links_keyed(&t, 1.2, 0.6, key).unwrap();
            for e in t.edges() {
                for l in small.links(e) {
                    assert!(large.links(e).contains(l));
                }
            }
        }
    }
}
