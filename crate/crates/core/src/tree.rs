//! Finite rooted trees with dense breadth-first vertex ids.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::offspring::{OffspringLaw, OffspringSampler};

/// Vertex identifier. The root is always `0` and ids follow breadth-first
/// order, so the children of a vertex occupy a contiguous id range.
pub type Vertex = usize;

/// An edge is named by its deeper endpoint, which gives a bijection between
/// non-root vertices and edges.
pub type Edge = usize;

/// Immutable finite rooted tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedTree {
    parent: Vec<Option<Vertex>>,
    first_child: Vec<Vertex>,
    child_count: Vec<usize>,
    depth: Vec<usize>,
}

impl RootedTree {
    /// The single-vertex tree.
    pub fn isolated_root() -> Self {
        Self::from_child_counts(&[0]).expect("valid by construction")
    }

    /// Builds a tree from the child counts of its vertices listed in
    /// breadth-first order.
    pub fn from_child_counts(counts: &[usize]) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(invalid("child_counts", "a tree needs at least one vertex"));
        }
        let mut parent = vec![None; n];
        let mut first_child = vec![0; n];
        let mut depth = vec![0; n];
        let mut next = 1usize;
        for v in 0..n {
            if v > 0 && parent[v].is_none() {
                return Err(invalid(
                    "child_counts",
                    format!("vertex {v} is unreachable from the root"),
                ));
            }
            first_child[v] = next;
            let end = next
                .checked_add(counts[v])
                .filter(|&end| end <= n)
                .ok_or_else(|| invalid("child_counts", "more children than vertices"))?;
            for c in next..end {
                parent[c] = Some(v);
                depth[c] = depth[v] + 1;
            }
            next = end;
        }
        if next != n {
            return Err(invalid(
                "child_counts",
                "counts do not sum to vertex count minus one",
            ));
        }
        Ok(Self {
            parent,
            first_child,
            child_count: counts.to_vec(),
            depth,
        })
    }

    /// Builds a tree from an arbitrary parent array (exactly one `None`).
    ///
    /// Vertices are relabelled into breadth-first order with siblings kept in
    /// increasing original id. Returns the tree and, for every new id, the
    /// original id it came from.
    pub fn from_parents(parents: &[Option<usize>]) -> Result<(Self, Vec<usize>)> {
        let n = parents.len();
        let mut roots = parents.iter().enumerate().filter(|(_, p)| p.is_none());
        let root = roots
            .next()
            .map(|(i, _)| i)
            .ok_or_else(|| invalid("parents", "no root"))?;
        if roots.next().is_some() {
            return Err(invalid("parents", "more than one root"));
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (v, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::UnknownVertex(p));
                }
                children[p].push(v);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(children[v].iter().copied());
        }
        if order.len() != n {
            return Err(invalid("parents", "parent map contains a cycle"));
        }
        let counts: Vec<usize> = order.iter().map(|&v| children[v].len()).collect();
        Ok((Self::from_child_counts(&counts)?, order))
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    /// Always false; a tree has at least its root.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> Vertex {
        0
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v < self.len()
    }

    fn check(&self, v: Vertex) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::UnknownVertex(v))
        }
    }

    /// Validates that `e` names an edge, i.e. a non-root vertex.
    pub fn check_edge(&self, e: Edge) -> Result<()> {
        if e >= 1 && e < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownEdge(e))
        }
    }

    pub fn parent(&self, v: Vertex) -> Option<Vertex> {
        self.parent[v]
    }

    pub fn children(&self, v: Vertex) -> Range<Vertex> {
        self.first_child[v]..self.first_child[v] + self.child_count[v]
    }

    pub fn child_count(&self, v: Vertex) -> usize {
        self.child_count[v]
    }

    pub fn depth(&self, v: Vertex) -> usize {
        self.depth[v]
    }

    /// Total degree: children plus the parent edge if any.
    pub fn degree(&self, v: Vertex) -> usize {
        self.child_count[v] + usize::from(self.parent[v].is_some())
    }

    pub fn max_depth(&self) -> usize {
        // breadth-first order puts a deepest vertex last
        self.depth[self.len() - 1]
    }

    /// Number of vertices at each depth `0..=max_depth`.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.max_depth() + 1];
        for &d in &self.depth {
            sizes[d] += 1;
        }
        sizes
    }

    pub fn vertices(&self) -> Range<Vertex> {
        0..self.len()
    }

    /// Non-root vertices, each naming the edge to its parent.
    pub fn edges(&self) -> Range<Edge> {
        1..self.len()
    }

    /// Minimum total degree among the children of `v`; `None` for a leaf.
    pub fn d_star(&self, v: Vertex) -> Result<Option<usize>> {
        self.check(v)?;
        Ok(self.children(v).map(|c| self.degree(c)).min())
    }

    /// Subtree induced by the vertices at depth at most `depth`.
    pub fn truncate(&self, depth: usize) -> RootedTree {
        // depths are sorted in breadth-first order, so the kept set is a prefix
        let keep = self.depth.partition_point(|&d| d <= depth);
        let counts: Vec<usize> = (0..keep)
            .map(|v| {
                if self.depth[v] < depth {
                    self.child_count[v]
                } else {
                    0
                }
            })
            .collect();
        Self::from_child_counts(&counts).expect("prefix of a valid tree")
    }

    /// Connected component of the root after deleting every vertex `v` for
    /// which `keep(v)` is false (the root is always kept).
    ///
    /// Returns the component relabelled in breadth-first order together with
    /// the original id of each new vertex.
    pub fn root_component(
        &self,
        mut keep: impl FnMut(Vertex) -> bool,
    ) -> (RootedTree, Vec<Vertex>) {
        let mut order = vec![0];
        let mut counts = Vec::new();
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let before = order.len();
            order.extend(self.children(v).filter(|&c| keep(c)));
            counts.push(order.len() - before);
        }
        let tree = Self::from_child_counts(&counts).expect("component of a valid tree");
        (tree, order)
    }

    /// Serialises as `id,parent_id,depth` lines with a header row; the root
    /// has an empty parent field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,parent_id,depth\n");
        for v in self.vertices() {
            match self.parent[v] {
                Some(p) => writeln!(out, "{v},{p},{}", self.depth[v]),
                None => writeln!(out, "{v},,{}", self.depth[v]),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }

    /// Parses the format written by [`RootedTree::to_csv`]. The header row is
    /// optional and depths, when present, must agree with the parent map.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("id")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || invalid("csv", format!("line {}: `{line}`", lineno + 1));
            let id: usize = fields
                .first()
                .and_then(|f| f.parse().ok())
                .ok_or_else(bad)?;
            let parent = match fields.get(1) {
                Some(f) if !f.is_empty() => Some(f.parse::<usize>().map_err(|_| bad())?),
                _ => None,
            };
            let depth = match fields.get(2) {
                Some(f) if !f.is_empty() => Some(f.parse::<usize>().map_err(|_| bad())?),
                _ => None,
            };
            rows.push((id, parent, depth));
        }
        let n = rows.len();
        let mut parents = vec![None; n];
        let mut seen = vec![false; n];
        for &(id, parent, _) in &rows {
            if id >= n || seen[id] {
                return Err(invalid(
                    "csv",
                    format!("ids must be a permutation of 0..{n}"),
                ));
            }
            seen[id] = true;
            parents[id] = parent;
        }
        let (tree, order) = Self::from_parents(&parents)?;
        let mut new_id = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new;
        }
        for &(id, _, depth) in &rows {
            if let Some(d) = depth {
                if tree.depth(new_id[id]) != d {
                    return Err(invalid(
                        "csv",
                        format!("vertex {id}: depth {d} disagrees with parent map"),
                    ));
                }
            }
        }
        Ok(tree)
    }
}

/// Rooted `d`-regular tree: the root has `d` children and every other
/// internal vertex has `d − 1`, so every non-leaf vertex has degree `d`.
pub fn generate_regular(d: usize, depth: usize) -> Result<RootedTree> {
    if d < 2 {
        return Err(invalid("d", format!("regular tree needs d >= 2, got {d}")));
    }
    level_homogeneous(depth, |level| if level == 0 { d } else { d - 1 })
}

/// Rooted tree in which every vertex above the bottom level has exactly `k`
/// children (the root therefore has degree `k`, others `k + 1`).
pub fn generate_kary(k: usize, depth: usize) -> Result<RootedTree> {
    if k == 0 {
        return Err(invalid("k", "k-ary tree needs k >= 1"));
    }
    level_homogeneous(depth, |_| k)
}

fn level_homogeneous(depth: usize, children_at: impl Fn(usize) -> usize) -> Result<RootedTree> {
    let mut counts = Vec::new();
    let mut level_size = 1usize;
    for level in 0..=depth {
        let c = if level < depth { children_at(level) } else { 0 };
        counts.extend(std::iter::repeat_n(c, level_size));
        level_size = level_size
            .checked_mul(c)
            .filter(|&s| s <= 1 << 31)
            .ok_or_else(|| invalid("depth", "tree would exceed 2^31 vertices"))?;
    }
    RootedTree::from_child_counts(&counts)
}

/// Galton-Watson tree truncated at `depth`: every vertex above that depth
/// independently draws its number of children from `law`.
pub fn generate_galton_watson<R: Rng + ?Sized>(
    law: &OffspringLaw,
    depth: usize,
    rng: &mut R,
) -> Result<RootedTree> {
    let sampler = OffspringSampler::new(law)?;
    Ok(galton_watson_with(&sampler, depth, rng))
}

pub(crate) fn galton_watson_with<R: Rng + ?Sized>(
    sampler: &OffspringSampler,
    depth: usize,
    rng: &mut R,
) -> RootedTree {
    let mut counts = Vec::new();
    let mut level_size = 1usize;
    for level in 0..=depth {
        let mut next = 0;
        for _ in 0..level_size {
            let c = if level < depth {
                sampler.sample(rng)
            } else {
                0
            };
            next += c;
            counts.push(c);
        }
        level_size = next;
        if level_size == 0 {
            break;
        }
    }
    RootedTree::from_child_counts(&counts).expect("valid by construction")
}
