//! Loop tracing on `V × [0, 1)`.
//!
//! A trajectory moves along the time circle of its current vertex. On
//! meeting a link on an incident edge it jumps to the other endpoint; a cross
//! keeps the time direction and a double bar reverses it. Jumps take no time.

use crate::error::{Error, Result};
use crate::links::{LinkConfiguration, LinkKind};
use crate::tree::{RootedTree, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopPoint {
    pub vertex: Vertex,
    pub time: f64,
    pub direction: Direction,
}

impl LoopPoint {
    pub fn new(vertex: Vertex, time: f64, direction: Direction) -> Self {
        Self {
            vertex,
            time,
            direction,
        }
    }
}

/// Occupation of one vertex between two consecutive events of a loop.
///
/// The trajectory runs from `entry` to `exit` in `direction`, wrapping around
/// the circle when needed. A segment of length 1 covers the whole circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub vertex: Vertex,
    pub entry: f64,
    pub exit: f64,
    pub direction: Direction,
    pub length: f64,
}

impl Segment {
    /// Start of the occupied arc when read upwards.
    pub fn arc_start(&self) -> f64 {
        match self.direction {
            Direction::Up => self.entry,
            Direction::Down => self.exit,
        }
    }

    /// Whether time `t` lies in the occupied arc, the entry point included and
    /// the exit point excluded.
    pub fn covers(&self, t: f64) -> bool {
        if self.length >= 1.0 {
            return true;
        }
        let offset = match self.direction {
            Direction::Up => (t - self.entry).rem_euclid(1.0),
            Direction::Down => (self.entry - t).rem_euclid(1.0),
        };
        offset < self.length
    }
}

/// A closed loop as an ordered list of occupation segments.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    pub segments: Vec<Segment>,
    pub length: f64,
    /// Visited vertices, sorted and without repetition.
    pub visited: Vec<Vertex>,
    pub max_depth: usize,
}

impl LoopTrace {
    fn from_segments(tree: &RootedTree, segments: Vec<Segment>) -> Self {
        let length = segments.iter().map(|s| s.length).sum();
        let mut visited: Vec<Vertex> = segments.iter().map(|s| s.vertex).collect();
        visited.sort_unstable();
        visited.dedup();
        let max_depth = visited.iter().map(|&v| tree.depth(v)).max().unwrap_or(0);
        Self {
            segments,
            length,
            visited,
            max_depth,
        }
    }

    pub fn visits(&self, v: Vertex) -> bool {
        self.visited.binary_search(&v).is_ok()
    }

    /// Whether the loop occupies vertex `v` at time `t`.
    pub fn occupies(&self, v: Vertex, t: f64) -> bool {
        self.segments.iter().any(|s| s.vertex == v && s.covers(t))
    }

    /// Whether the loop visits a vertex at depth `depth` or deeper.
    pub fn reaches_depth(&self, depth: usize) -> bool {
        self.max_depth >= depth
    }
}

/// True iff the loop visits a vertex at depth `depth` or deeper.
pub fn loop_reaches_depth(trace: &LoopTrace, depth: usize) -> bool {
    trace.reaches_depth(depth)
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    link: usize,
}

/// Per-vertex time-sorted lists of the links on incident edges.
///
/// Ties in time across different edges are broken by edge id and then by
/// position, which is the order of global link indices.
#[derive(Debug, Clone)]
pub struct EventIndex {
    offsets: Vec<usize>,
    events: Vec<Event>,
    // for every link: position in the upper endpoint's list, then the lower's
    ports: Vec<[usize; 2]>,
    kinds: Vec<LinkKind>,
    link_edge: Vec<usize>,
}

impl EventIndex {
    pub fn new(tree: &RootedTree, config: &LinkConfiguration) -> Self {
        let n = tree.len();
        let mut offsets = vec![0usize; n + 1];
        for e in tree.edges() {
            let m = config.link_count(e);
            offsets[e + 1] += m;
            offsets[tree.parent(e).expect("edge has a parent") + 1] += m;
        }
        for v in 0..n {
            offsets[v + 1] += offsets[v];
        }
        let total = config.total_links();
        let mut events = vec![Event { time: 0.0, link: 0 }; offsets[n]];
        let mut fill = offsets.clone();
        let mut kinds = Vec::with_capacity(total);
        let mut link_edge = Vec::with_capacity(total);
        for e in tree.edges() {
            let p = tree.parent(e).expect("edge has a parent");
            let base = config.link_offset(e);
            for (i, l) in config.links(e).iter().enumerate() {
                let event = Event {
                    time: l.time,
                    link: base + i,
                };
                events[fill[p]] = event;
                fill[p] += 1;
                events[fill[e]] = event;
                fill[e] += 1;
                kinds.push(l.kind);
                link_edge.push(e);
            }
        }
        let mut ports = vec![[0usize; 2]; total];
        for v in 0..n {
            let list = &mut events[offsets[v]..offsets[v + 1]];
            list.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.link.cmp(&b.link)));
            for (pos, ev) in list.iter().enumerate() {
                let side = usize::from(link_edge[ev.link] == v);
                ports[ev.link][side] = pos;
            }
        }
        Self {
            offsets,
            events,
            ports,
            kinds,
            link_edge,
        }
    }

    fn count(&self, v: Vertex) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    fn time(&self, v: Vertex, pos: usize) -> f64 {
        self.events[self.offsets[v] + pos].time
    }

    fn step(&self, v: Vertex, pos: usize, dir: Direction) -> usize {
        let k = self.count(v);
        match dir {
            Direction::Up => (pos + 1) % k,
            Direction::Down => (pos + k - 1) % k,
        }
    }

    /// Crosses the link at `pos` of `v`; returns the new vertex, its port and
    /// the new direction.
    fn jump(
        &self,
        tree: &RootedTree,
        v: Vertex,
        pos: usize,
        dir: Direction,
    ) -> (Vertex, usize, Direction) {
        let link = self.events[self.offsets[v] + pos].link;
        let edge = self.link_edge[link];
        let (w, side) = if edge == v {
            (tree.parent(edge).expect("edge has a parent"), 0)
        } else {
            (edge, 1)
        };
        let dir = match self.kinds[link] {
            LinkKind::Cross => dir,
            LinkKind::Bar => dir.reversed(),
        };
        (w, self.ports[link][side], dir)
    }

    fn arc(&self, v: Vertex, from: usize, to: usize, dir: Direction) -> f64 {
        if from == to {
            return 1.0;
        }
        let (a, b) = (self.time(v, from), self.time(v, to));
        match dir {
            Direction::Up => (b - a).rem_euclid(1.0),
            Direction::Down => (a - b).rem_euclid(1.0),
        }
    }

    /// Gap id of the arc left from port `pos` in direction `dir`: the gap
    /// between events `g` and `g + 1` has id `g`.
    fn gap(&self, v: Vertex, pos: usize, dir: Direction) -> usize {
        match dir {
            Direction::Up => pos,
            Direction::Down => self.step(v, pos, Direction::Down),
        }
    }
}

fn step_limit(index: &EventIndex) -> usize {
    4 * index.kinds.len() + 2
}

/// Traces the loop through `start`.
pub fn trace_loop(
    tree: &RootedTree,
    config: &LinkConfiguration,
    start: LoopPoint,
) -> Result<LoopTrace> {
    let index = EventIndex::new(tree, config);
    trace_loop_indexed(tree, &index, start)
}

/// [`trace_loop`] with a prebuilt event index.
pub fn trace_loop_indexed(
    tree: &RootedTree,
    index: &EventIndex,
    start: LoopPoint,
) -> Result<LoopTrace> {
    let LoopPoint {
        vertex,
        time,
        direction,
    } = start;
    if !tree.contains(vertex) {
        return Err(Error::UnknownVertex(vertex));
    }
    let k = index.count(vertex);
    if k == 0 {
        let seg = Segment {
            vertex,
            entry: time,
            exit: time,
            direction,
            length: 1.0,
        };
        return Ok(LoopTrace::from_segments(tree, vec![seg]));
    }
    let list = &index.events[index.offsets[vertex]..index.offsets[vertex + 1]];
    if list.iter().any(|e| e.time == time) {
        return Err(Error::DegenerateStart { vertex, time });
    }
    // events strictly above the start time begin at `above`
    let above = list.partition_point(|e| e.time < time);
    let (first, before) = match direction {
        Direction::Up => (above % k, (above + k - 1) % k),
        Direction::Down => ((above + k - 1) % k, above % k),
    };
    let offset = |from: f64, to: f64, dir: Direction| match dir {
        Direction::Up => (to - from).rem_euclid(1.0),
        Direction::Down => (from - to).rem_euclid(1.0),
    };
    let mut segments = vec![Segment {
        vertex,
        entry: time,
        exit: index.time(vertex, first),
        direction,
        length: offset(time, index.time(vertex, first), direction),
    }];
    let (mut v, mut pos, mut dir) = index.jump(tree, vertex, first, direction);
    for _ in 0..step_limit(index) {
        if v == vertex && pos == before && dir == direction {
            let entry = index.time(v, pos);
            segments.push(Segment {
                vertex: v,
                entry,
                exit: time,
                direction: dir,
                length: offset(entry, time, dir),
            });
            return Ok(LoopTrace::from_segments(tree, segments));
        }
        let next = index.step(v, pos, dir);
        segments.push(Segment {
            vertex: v,
            entry: index.time(v, pos),
            exit: index.time(v, next),
            direction: dir,
            length: index.arc(v, pos, next, dir),
        });
        (v, pos, dir) = index.jump(tree, v, next, dir);
    }
    unreachable!("loop tracing exceeded the 4M + 2 step bound")
}

/// Traces the loop that leaves port `pos` of `v` in direction `dir`, marking
/// every gap it passes.
fn trace_from_port(
    tree: &RootedTree,
    index: &EventIndex,
    v0: Vertex,
    pos0: usize,
    dir0: Direction,
    seen: &mut [bool],
) -> LoopTrace {
    let mut segments = Vec::new();
    let (mut v, mut pos, mut dir) = (v0, pos0, dir0);
    loop {
        seen[index.offsets[v] + index.gap(v, pos, dir)] = true;
        let next = index.step(v, pos, dir);
        segments.push(Segment {
            vertex: v,
            entry: index.time(v, pos),
            exit: index.time(v, next),
            direction: dir,
            length: index.arc(v, pos, next, dir),
        });
        (v, pos, dir) = index.jump(tree, v, next, dir);
        if (v, pos, dir) == (v0, pos0, dir0) {
            return LoopTrace::from_segments(tree, segments);
        }
        debug_assert!(segments.len() <= step_limit(index));
    }
}

/// Every loop of the configuration, in order of the smallest vertex id they
/// visit and then of the earliest gap between events at that vertex.
pub fn all_loops(tree: &RootedTree, config: &LinkConfiguration) -> Vec<LoopTrace> {
    let index = EventIndex::new(tree, config);
    let mut seen = vec![false; index.events.len()];
    let mut loops = Vec::new();
    for v in tree.vertices() {
        let k = index.count(v);
        if k == 0 {
            loops.push(LoopTrace::from_segments(
                tree,
                vec![Segment {
                    vertex: v,
                    entry: 0.0,
                    exit: 0.0,
                    direction: Direction::Up,
                    length: 1.0,
                }],
            ));
            continue;
        }
        for g in 0..k {
            if !seen[index.offsets[v] + g] {
                loops.push(trace_from_port(
                    tree,
                    &index,
                    v,
                    g,
                    Direction::Up,
                    &mut seen,
                ));
            }
        }
    }
    loops
}

/// Loop of `(o, 0)` moving up: the loop whose reach decides loop percolation.
pub fn root_loop(tree: &RootedTree, config: &LinkConfiguration) -> Result<LoopTrace> {
    trace_loop(
        tree,
        config,
        LoopPoint::new(tree.root(), 0.0, Direction::Up),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::{sample_links, Link};
    use crate::rng::stream;
    use crate::tree::{generate_kary, generate_regular};

    fn config(tree: &RootedTree, lists: Vec<Vec<Link>>) -> LinkConfiguration {
        LinkConfiguration::from_edge_lists(tree, 1.0, 1.0, lists).unwrap()
    }

    #[test]
    fn no_links_gives_unit_loop() {
        let t = generate_kary(1, 1).unwrap();
        let c = LinkConfiguration::empty(&t, 1.0, 1.0);
        let l = root_loop(&t, &c).unwrap();
        assert_eq!(l.segments.len(), 1);
        assert_eq!(l.length, 1.0);
        assert!(!l.reaches_depth(1));
        assert_eq!(all_loops(&t, &c).len(), 2);
    }

    #[test]
    fn one_cross_merges_two_circles() {
        let t = generate_kary(1, 1).unwrap();
        let c = config(&t, vec![vec![], vec![Link::cross(0.4)]]);
        let l = root_loop(&t, &c).unwrap();
        assert!((l.length - 2.0).abs() < 1e-12);
        assert_eq!(l.visited, vec![0, 1]);
        assert_eq!(all_loops(&t, &c).len(), 1);
    }

    #[test]
    fn two_crosses_split() {
        let t = generate_kary(1, 1).unwrap();
        let c = config(&t, vec![vec![], vec![Link::cross(0.25), Link::cross(0.75)]]);
        let l = root_loop(&t, &c).unwrap();
        assert!((l.length - 1.0).abs() < 1e-12);
        assert!(l.occupies(0, 0.1) && l.occupies(0, 0.9) && !l.occupies(0, 0.5));
        assert!(l.occupies(1, 0.5) && !l.occupies(1, 0.1));
        let loops = all_loops(&t, &c);
        assert_eq!(loops.len(), 2);
        assert!(loops.iter().all(|l| (l.length - 1.0).abs() < 1e-12));
    }

    #[test]
    fn bar_reverses_direction() {
        let t = generate_kary(1, 1).unwrap();
        let c =
            LinkConfiguration::from_edge_lists(&t, 1.0, 0.0, vec![vec![], vec![Link::bar(0.3)]])
                .unwrap();
        let l = root_loop(&t, &c).unwrap();
        assert!((l.length - 2.0).abs() < 1e-12);
        assert_eq!(l.segments[1].direction, Direction::Down);
    }

    #[test]
    fn degenerate_start_is_reported() {
        let t = generate_kary(1, 1).unwrap();
        let c = config(&t, vec![vec![], vec![Link::cross(0.0)]]);
        assert!(matches!(
            root_loop(&t, &c),
            Err(Error::DegenerateStart { .. })
        ));
        let p = LoopPoint::new(7, 0.5, Direction::Up);
        assert!(matches!(
            trace_loop(&t, &c, p),
            Err(Error::UnknownVertex(7))
        ));
    }

    #[test]
    fn traces_agree_with_all_loops() {
        let t = generate_regular(3, 4).unwrap();
        for seed in 0..200 {
            let c = sample_links(&t, 1.3, 0.5, &mut stream(seed)).unwrap();
            let index = EventIndex::new(&t, &c);
            let loops = all_loops(&t, &c);
            let total: f64 = loops.iter().map(|l| l.length).sum();
            assert!((total - t.len() as f64).abs() < 1e-9);
            // restart every loop from the middle of one of its segments
            for l in &loops {
                let s = l.segments[l.segments.len() / 2];
                if s.length == 0.0 {
                    continue;
                }
                let mid = match s.direction {
                    Direction::Up => (s.entry + s.length / 2.0).rem_euclid(1.0),
                    Direction::Down => (s.entry - s.length / 2.0).rem_euclid(1.0),
                };
                let again =
                    trace_loop_indexed(&t, &index, LoopPoint::new(s.vertex, mid, s.direction))
                        .unwrap();
                assert!((again.length - l.length).abs() < 1e-9);
                assert_eq!(again.visited, l.visited);
                for s in again.segments.iter().filter(|s| s.length > 1e-9) {
                    let mid = (s.arc_start() + s.length / 2.0).rem_euclid(1.0);
                    assert!(l.occupies(s.vertex, mid));
                }
            }
        }
    }
}
