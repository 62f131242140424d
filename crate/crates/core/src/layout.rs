//! Parallel-aisle warehouse graph.
//!
//! Every pick location is a node. An aisle holds `depth` positions on each of
//! its two rack sides; depth 0 touches the bottom cross-aisle and depth
//! `depth - 1` the top one. Pickers move freely (undirected graph), AMRs follow
//! a one-way direction inside each aisle (directed graph) and move freely on
//! the cross-aisles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance between depth-adjacent locations inside an aisle.
pub const DEPTH_STEP_M: f64 = 1.4;
/// Distance between the two rack sides at the same depth.
pub const SIDE_STEP_M: f64 = 1.0;
/// Distance between adjacent aisles along a cross-aisle.
pub const AISLE_STEP_M: f64 = 6.0;

const PATH_EPS: f64 = 1e-9;

#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// AMR travel direction inside an aisle. `Up` means increasing depth.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Picker,
    Amr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub len: f64,
    pub mode: Mode,
}

#[derive(Clone, Debug)]
pub struct WarehouseLayout {
    n_aisles: usize,
    depth: usize,
    /// Picker edges, each undirected edge listed once with `u < v`.
    picker_edges: Vec<Edge>,
    /// Directed AMR edges.
    amr_edges: Vec<Edge>,
    picker_adj: Vec<Vec<(NodeId, f64)>>,
    amr_adj: Vec<Vec<(NodeId, f64)>>,
}

impl WarehouseLayout {
    pub fn n_aisles(&self) -> usize {
        self.n_aisles
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_nodes(&self) -> usize {
        self.n_aisles * self.depth * 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n_nodes()).map(NodeId::from)
    }

    #[inline]
    pub fn node(&self, aisle: usize, depth: usize, side: Side) -> NodeId {
        debug_assert!(aisle < self.n_aisles && depth < self.depth);
        let s = match side {
            Side::Left => 0,
            Side::Right => 1,
        };
        NodeId::from((aisle * self.depth + depth) * 2 + s)
    }

    #[inline]
    pub fn aisle_of(&self, v: NodeId) -> usize {
        v.index() / (2 * self.depth)
    }

    #[inline]
    pub fn depth_of(&self, v: NodeId) -> usize {
        (v.index() / 2) % self.depth
    }

    #[inline]
    pub fn side_of(&self, v: NodeId) -> Side {
        if v.index().is_multiple_of(2) {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Bottom-left corner: depth 0, left side of aisle 0.
    pub fn base_node(&self) -> NodeId {
        self.node(0, 0, Side::Left)
    }

    pub fn amr_direction(&self, aisle: usize) -> Direction {
        if aisle.is_multiple_of(2) {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    /// Position of `v` counted from the entry end of its aisle in AMR travel
    /// direction (0 = first location an AMR meets).
    pub fn position_along_direction(&self, v: NodeId) -> usize {
        let d = self.depth_of(v);
        match self.amr_direction(self.aisle_of(v)) {
            Direction::Up => d,
            Direction::Down => self.depth - 1 - d,
        }
    }

    /// Nodes of one aisle, ordered by node id.
    pub fn aisle_nodes(&self, aisle: usize) -> std::ops::Range<usize> {
        let per = 2 * self.depth;
        aisle * per..(aisle + 1) * per
    }

    pub fn edges(&self, mode: Mode) -> &[Edge] {
        match mode {
            Mode::Picker => &self.picker_edges,
            Mode::Amr => &self.amr_edges,
        }
    }

    /// Outgoing neighbours sorted by node id.
    pub fn neighbors(&self, mode: Mode, v: NodeId) -> &[(NodeId, f64)] {
        match mode {
            Mode::Picker => &self.picker_adj[v.index()],
            Mode::Amr => &self.amr_adj[v.index()],
        }
    }

    /// True if the edge `u -> v` runs along an aisle (changes depth).
    pub fn is_in_aisle_move(&self, u: NodeId, v: NodeId) -> bool {
        self.aisle_of(u) == self.aisle_of(v) && self.depth_of(u) != self.depth_of(v)
    }

    pub fn to_document(&self) -> LayoutDocument {
        let mut edges = self.picker_edges.clone();
        edges.extend(self.amr_edges.iter().cloned());
        LayoutDocument {
            n_aisles: self.n_aisles,
            depth: self.depth,
            edges,
        }
    }
}

/// JSON form of a layout, used for debugging and golden files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutDocument {
    pub n_aisles: usize,
    pub depth: usize,
    pub edges: Vec<Edge>,
}

pub fn build_layout(n_aisles: usize, depth: usize) -> Result<WarehouseLayout> {
    if n_aisles == 0 || depth == 0 {
        return Err(Error::config(format!(
            "layout needs at least one aisle and one depth position, got {n_aisles}x{depth}"
        )));
    }
    let n = n_aisles * depth * 2;
    if n > u32::MAX as usize {
        return Err(Error::config("layout too large"));
    }
    let mut layout = WarehouseLayout {
        n_aisles,
        depth,
        picker_edges: Vec::new(),
        amr_edges: Vec::new(),
        picker_adj: vec![Vec::new(); n],
        amr_adj: vec![Vec::new(); n],
    };

    let mut picker = Vec::new();
    let mut amr = Vec::new();
    let sides = [Side::Left, Side::Right];
    for a in 0..n_aisles {
        for d in 0..depth {
            let l = layout.node(a, d, Side::Left);
            let r = layout.node(a, d, Side::Right);
            picker.push((l, r, SIDE_STEP_M));
            amr.push((l, r, SIDE_STEP_M));
            amr.push((r, l, SIDE_STEP_M));
            if d + 1 < depth {
                for s in sides {
                    let lo = layout.node(a, d, s);
                    let hi = layout.node(a, d + 1, s);
                    picker.push((lo, hi, DEPTH_STEP_M));
                    // A single aisle has no return loop, so it stays two-way.
                    if n_aisles == 1 {
                        amr.push((lo, hi, DEPTH_STEP_M));
                        amr.push((hi, lo, DEPTH_STEP_M));
                    } else {
                        match layout.amr_direction(a) {
                            Direction::Up => amr.push((lo, hi, DEPTH_STEP_M)),
                            Direction::Down => amr.push((hi, lo, DEPTH_STEP_M)),
                        }
                    }
                }
            }
        }
        if a + 1 < n_aisles {
            let ends: &[usize] = if depth == 1 { &[0] } else { &[0, depth - 1] };
            for &d in ends {
                for s in sides {
                    for t in sides {
                        let u = layout.node(a, d, s);
                        let v = layout.node(a + 1, d, t);
                        picker.push((u, v, AISLE_STEP_M));
                        amr.push((u, v, AISLE_STEP_M));
                        amr.push((v, u, AISLE_STEP_M));
                    }
                }
            }
        }
    }

    for (u, v, len) in picker {
        let (u, v) = if u < v { (u, v) } else { (v, u) };
        layout.picker_adj[u.index()].push((v, len));
        layout.picker_adj[v.index()].push((u, len));
        layout.picker_edges.push(Edge {
            u,
            v,
            len,
            mode: Mode::Picker,
        });
    }
    for (u, v, len) in amr {
        layout.amr_adj[u.index()].push((v, len));
        layout.amr_edges.push(Edge {
            u,
            v,
            len,
            mode: Mode::Amr,
        });
    }
    for adj in layout.picker_adj.iter_mut().chain(layout.amr_adj.iter_mut()) {
        adj.sort_by_key(|&(v, _)| v);
    }
    Ok(layout)
}

/// Dense shortest-path distances for one movement mode.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    mode: Mode,
    n: usize,
    dist: Vec<f64>,
}

impl DistanceMatrix {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, u: NodeId, v: NodeId) -> f64 {
        self.dist[u.index() * self.n + v.index()]
    }

    pub fn row(&self, u: NodeId) -> &[f64] {
        &self.dist[u.index() * self.n..(u.index() + 1) * self.n]
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra_into(layout: &WarehouseLayout, mode: Mode, src: NodeId, out: &mut [f64]) {
    out.fill(f64::INFINITY);
    out[src.index()] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry { dist: 0.0, node: src.0 });
    while let Some(HeapEntry { dist, node }) = heap.pop() {
        if dist > out[node as usize] {
            continue;
        }
        for &(v, len) in layout.neighbors(mode, NodeId(node)) {
            let nd = dist + len;
            if nd < out[v.index()] {
                out[v.index()] = nd;
                heap.push(HeapEntry { dist: nd, node: v.0 });
            }
        }
    }
}

pub fn all_pairs_distance(layout: &WarehouseLayout, mode: Mode) -> DistanceMatrix {
    let n = layout.n_nodes();
    let mut dist = vec![0.0; n * n];
    for (u, row) in dist.chunks_mut(n.max(1)).enumerate().take(n) {
        dijkstra_into(layout, mode, NodeId::from(u), row);
    }
    DistanceMatrix { mode, n, dist }
}

/// Layout plus both precomputed distance matrices, shared read-only.
#[derive(Debug)]
pub struct Warehouse {
    pub layout: WarehouseLayout,
    pub picker_dist: DistanceMatrix,
    pub amr_dist: DistanceMatrix,
}

impl Warehouse {
    pub fn new(n_aisles: usize, depth: usize) -> Result<Arc<Self>> {
        let layout = build_layout(n_aisles, depth)?;
        let picker_dist = all_pairs_distance(&layout, Mode::Picker);
        let amr_dist = all_pairs_distance(&layout, Mode::Amr);
        Ok(Arc::new(Warehouse {
            layout,
            picker_dist,
            amr_dist,
        }))
    }

    pub fn dist(&self, mode: Mode) -> &DistanceMatrix {
        match mode {
            Mode::Picker => &self.picker_dist,
            Mode::Amr => &self.amr_dist,
        }
    }

    pub fn shortest_path(&self, mode: Mode, from: NodeId, to: NodeId) -> Vec<NodeId> {
        shortest_path(&self.layout, self.dist(mode), from, to)
    }
}

/// Shortest path from `from` to `to` (inclusive on both ends). Among equally
/// short continuations the lowest next-node id is taken.
pub fn shortest_path(layout: &WarehouseLayout, dist: &DistanceMatrix, from: NodeId, to: NodeId) -> Vec<NodeId> {
    let mut path = vec![from];
    let mut cur = from;
    while cur != to {
        let remaining = dist.get(cur, to);
        let next = layout
            .neighbors(dist.mode(), cur)
            .iter()
            .find(|&&(v, len)| (len + dist.get(v, to) - remaining).abs() <= PATH_EPS)
            .map(|&(v, _)| v)
            .expect("distance matrix is consistent with the edge set");
        path.push(next);
        cur = next;
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bellman-Ford over the explicit edge list: independent of the heap-based routine.
    fn bellman_ford(layout: &WarehouseLayout, mode: Mode, src: NodeId) -> Vec<f64> {
        let n = layout.n_nodes();
        let mut d = vec![f64::INFINITY; n];
        d[src.index()] = 0.0;
        let directed: Vec<(usize, usize, f64)> = layout
            .edges(mode)
            .iter()
            .flat_map(|e| {
                let fwd = (e.u.index(), e.v.index(), e.len);
                match mode {
                    Mode::Picker => vec![fwd, (e.v.index(), e.u.index(), e.len)],
                    Mode::Amr => vec![fwd],
                }
            })
            .collect();
        for _ in 0..n {
            let mut changed = false;
            for &(u, v, w) in &directed {
                if d[u] + w < d[v] {
                    d[v] = d[u] + w;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        d
    }

    #[test]
    fn node_counts_match_dimensions() {
        assert_eq!(build_layout(10, 10).unwrap().n_nodes(), 200);
        assert_eq!(build_layout(7, 7).unwrap().n_nodes(), 98);
        assert_eq!(build_layout(35, 40).unwrap().n_nodes(), 2800);
        let tiny = build_layout(1, 1).unwrap();
        assert_eq!(tiny.n_nodes(), 2);
        let d = all_pairs_distance(&tiny, Mode::Picker);
        assert_eq!(d.get(NodeId(0), NodeId(1)), 1.0);
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(build_layout(0, 3).is_err());
        assert!(build_layout(3, 0).is_err());
    }

    #[test]
    fn coordinates_round_trip() {
        let l = build_layout(4, 5).unwrap();
        for a in 0..4 {
            for d in 0..5 {
                for s in [Side::Left, Side::Right] {
                    let v = l.node(a, d, s);
                    assert_eq!(l.aisle_of(v), a);
                    assert_eq!(l.depth_of(v), d);
                    assert_eq!(l.side_of(v), s);
                }
            }
            assert_eq!(l.aisle_nodes(a).len(), 10);
        }
        assert_eq!(l.base_node(), NodeId(0));
    }

    #[test]
    fn basic_distances() {
        let w = Warehouse::new(3, 4).unwrap();
        let l = &w.layout;
        let a = l.node(0, 1, Side::Left);
        let b = l.node(0, 2, Side::Left);
        assert!((w.picker_dist.get(a, b) - 1.4).abs() < 1e-12);
        for v in l.nodes() {
            assert_eq!(w.picker_dist.get(v, v), 0.0);
            assert_eq!(w.amr_dist.get(v, v), 0.0);
        }
        // Cross-aisle hop at the bottom, side independent.
        let c = l.node(1, 0, Side::Right);
        assert!((w.picker_dist.get(l.node(0, 0, Side::Left), c) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn amr_path_along_direction() {
        let w = Warehouse::new(2, 5).unwrap();
        let l = &w.layout;
        let from = l.node(0, 0, Side::Left);
        let to = l.node(0, 3, Side::Left);
        let p = w.shortest_path(Mode::Amr, from, to);
        assert_eq!(p.len(), 4);
        let len: f64 = p.windows(2).map(|s| w.amr_dist.get(s[0], s[1])).sum();
        assert!((len - 4.2).abs() < 1e-12);
        assert_eq!(w.shortest_path(Mode::Amr, from, from), vec![from]);
    }

    #[test]
    fn amr_behind_requires_loop() {
        let w = Warehouse::new(3, 4).unwrap();
        let l = &w.layout;
        // Aisle 0 runs up; going one step down means looping through aisle 1.
        let from = l.node(0, 2, Side::Left);
        let to = l.node(0, 1, Side::Left);
        let bf = bellman_ford(l, Mode::Amr, from);
        assert!((w.amr_dist.get(from, to) - bf[to.index()]).abs() < 1e-9);
        // up 1 to the top, across (6), down aisle 1 (3 steps), across (6), up 1.
        let expected = 1.4 + 6.0 + 3.0 * 1.4 + 6.0 + 1.4;
        assert!((w.amr_dist.get(from, to) - expected).abs() < 1e-9);
    }

    #[test]
    fn all_pairs_matches_per_query_search_up_to_8x8() {
        for a in 1..=8 {
            for d in 1..=8 {
                let w = Warehouse::new(a, d).unwrap();
                for mode in [Mode::Picker, Mode::Amr] {
                    for src in w.layout.nodes() {
                        let bf = bellman_ford(&w.layout, mode, src);
                        for v in w.layout.nodes() {
                            let m = w.dist(mode).get(src, v);
                            assert!(m.is_finite(), "{a}x{d} {mode:?} {src:?}->{v:?}");
                            assert!((m - bf[v.index()]).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn metric_properties() {
        let w = Warehouse::new(4, 4).unwrap();
        let n = w.layout.nodes().collect::<Vec<_>>();
        for &u in &n {
            for &v in &n {
                let p = w.picker_dist.get(u, v);
                assert!((p - w.picker_dist.get(v, u)).abs() < 1e-12);
                assert!(w.amr_dist.get(u, v) >= p - 1e-9);
                for &x in &n {
                    assert!(p <= w.picker_dist.get(u, x) + w.picker_dist.get(x, v) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn paths_follow_edges_and_match_matrix() {
        let w = Warehouse::new(3, 3).unwrap();
        for mode in [Mode::Picker, Mode::Amr] {
            for u in w.layout.nodes() {
                for v in w.layout.nodes() {
                    let p = w.shortest_path(mode, u, v);
                    assert_eq!(p[0], u);
                    assert_eq!(*p.last().unwrap(), v);
                    let mut total = 0.0;
                    for s in p.windows(2) {
                        let e = w
                            .layout
                            .neighbors(mode, s[0])
                            .iter()
                            .find(|(x, _)| *x == s[1])
                            .expect("consecutive path nodes are adjacent");
                        total += e.1;
                    }
                    assert!((total - w.dist(mode).get(u, v)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn layout_document_round_trip() {
        let l = build_layout(2, 2).unwrap();
        let doc = l.to_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back: LayoutDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(doc, back);
        assert!(json.contains("\"mode\":\"amr\""));
    }
}
