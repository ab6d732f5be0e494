//! Oriented graphs, cell boundaries and 2-dimensional cell complexes.
//!
//! Edges are identified by their position in the graph's edge list. A 2-cell
//! is attached along a simple cycle and is represented by its signed boundary
//! vector: `+1` where the cycle traverses an edge from source to target, `-1`
//! where it runs against the edge orientation.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplexError {
    #[error("graph must have at least one node")]
    NoNodes,
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("edge {edge} duplicates edge {existing} between nodes {a} and {b}")]
    DuplicateEdge {
        edge: usize,
        existing: usize,
        a: usize,
        b: usize,
    },
    #[error("edge {edge} references node {node}, but the graph has {node_count} nodes")]
    NodeOutOfRange {
        edge: usize,
        node: usize,
        node_count: usize,
    },
    #[error("edge id {edge} out of range for a graph with {edge_count} edges")]
    EdgeOutOfRange { edge: usize, edge_count: usize },
    #[error("walk is not closed (first node {first}, last node {last})")]
    OpenWalk { first: usize, last: usize },
    #[error("no edge between nodes {a} and {b}")]
    MissingEdge { a: usize, b: usize },
    #[error("walk revisits node {node}")]
    RepeatedNode { node: usize },
    #[error("cycle has {len} edges, at least 3 are required")]
    TooShort { len: usize },
    #[error("edge set is not a simple cycle: {reason}")]
    NotACycle { reason: String },
    #[error("closing edge {edge} is already part of the forest")]
    ClosingEdgeInForest { edge: usize },
    #[error("endpoints {a} and {b} of closing edge {edge} lie in different forest components")]
    NoPath { edge: usize, a: usize, b: usize },
    #[error("invalid cell {index}: {source}")]
    InvalidCell {
        index: usize,
        #[source]
        source: Box<ComplexError>,
    },
    #[error("boundary entry on edge {edge} has sign {sign}, expected +1 or -1")]
    InvalidSign { edge: usize, sign: i8 },
}

/// A simple graph on nodes `0..node_count` with a fixed orientation per edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrientedGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    // (neighbor, edge id), sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
    lookup: HashMap<(usize, usize), usize>,
}

impl OrientedGraph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, ComplexError> {
        if node_count == 0 {
            return Err(ComplexError::NoNodes);
        }
        let mut adjacency = vec![Vec::new(); node_count];
        let mut lookup = HashMap::with_capacity(edges.len());
        for (id, &(s, t)) in edges.iter().enumerate() {
            for node in [s, t] {
                if node >= node_count {
                    return Err(ComplexError::NodeOutOfRange {
                        edge: id,
                        node,
                        node_count,
                    });
                }
            }
            if s == t {
                return Err(ComplexError::SelfLoop { edge: id, node: s });
            }
            let key = (s.min(t), s.max(t));
            if let Some(&existing) = lookup.get(&key) {
                return Err(ComplexError::DuplicateEdge {
                    edge: id,
                    existing,
                    a: s,
                    b: t,
                });
            }
            lookup.insert(key, id);
            adjacency[s].push((t, id));
            adjacency[t].push((s, id));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
            lookup,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(source, target)` of edge `id`.
    pub fn edge(&self, id: usize) -> (usize, usize) {
        self.edges[id]
    }

    /// Incident `(neighbor, edge id)` pairs of `node`, sorted by neighbor.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.lookup.get(&(a.min(b), a.max(b))).copied()
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut uf = crate::unionfind::UnionFind::new(self.node_count);
        let merges = self.edges.iter().filter(|&&(s, t)| uf.union(s, t)).count();
        self.node_count - merges
    }

    /// `true` if the graph contains no cycle.
    pub fn is_forest(&self) -> bool {
        self.edge_count() + self.component_count() == self.node_count
    }

    /// `B₁ · x` for an integer edge vector given as `(edge, value)` pairs.
    pub fn divergence(&self, entries: &[(usize, i8)]) -> Vec<i64> {
        let mut out = vec![0i64; self.node_count];
        for &(e, v) in entries {
            let (s, t) = self.edges[e];
            out[s] += i64::from(v);
            out[t] -= i64::from(v);
        }
        out
    }

    fn check_edge(&self, edge: usize) -> Result<(), ComplexError> {
        if edge >= self.edges.len() {
            return Err(ComplexError::EdgeOutOfRange {
                edge,
                edge_count: self.edges.len(),
            });
        }
        Ok(())
    }
}

/// Node-to-edge signed incidence matrix `B₁` (`n × m`).
#[derive(Debug, Clone)]
pub struct SignedIncidence {
    matrix: CscMatrix<f64>,
}

impl SignedIncidence {
    pub fn matrix(&self) -> &CscMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CscMatrix<f64> {
        self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from(&self.matrix)
    }
}

/// Builds `B₁` with `+1` at the source and `-1` at the target of every edge.
pub fn build_incidence(graph: &OrientedGraph) -> SignedIncidence {
    let mut coo = CooMatrix::new(graph.node_count(), graph.edge_count());
    for (k, &(s, t)) in graph.edges().iter().enumerate() {
        coo.push(s, k, 1.0);
        coo.push(t, k, -1.0);
    }
    SignedIncidence {
        matrix: CscMatrix::from(&coo),
    }
}

/// Signed boundary vector of a 2-cell. Entries are sorted by edge id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellBoundary {
    entries: Vec<(usize, i8)>,
}

impl CellBoundary {
    /// Validates `entries` as the oriented boundary of a simple cycle in `graph`.
    pub fn from_signed_edges(
        graph: &OrientedGraph,
        mut entries: Vec<(usize, i8)>,
    ) -> Result<Self, ComplexError> {
        entries.sort_unstable();
        for &(e, sign) in &entries {
            graph.check_edge(e)?;
            if sign != 1 && sign != -1 {
                return Err(ComplexError::InvalidSign { edge: e, sign });
            }
        }
        let edges: Vec<usize> = entries.iter().map(|&(e, _)| e).collect();
        check_simple_cycle(graph, &edges)?;
        if let Some(node) = graph.divergence(&entries).iter().position(|&d| d != 0) {
            return Err(ComplexError::NotACycle {
                reason: format!("orientation is inconsistent at node {node}"),
            });
        }
        Ok(Self { entries })
    }

    /// `(edge id, sign)` pairs sorted by edge id.
    pub fn entries(&self) -> &[(usize, i8)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(e, _)| e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sign_at(&self, edge: usize) -> Option<i8> {
        self.entries
            .binary_search_by_key(&edge, |&(e, _)| e)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn negated(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&(e, s)| (e, -s)).collect(),
        }
    }

    /// Dense length-`edge_count` vector.
    pub fn to_dense(&self, edge_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; edge_count];
        for &(e, s) in &self.entries {
            out[e] = f64::from(s);
        }
        out
    }

    /// Orientation-free identity: the entries with the first sign forced to `+1`.
    pub fn unsigned_key(&self) -> Vec<(usize, i8)> {
        match self.entries.first() {
            Some(&(_, -1)) => self.negated().entries,
            _ => self.entries.clone(),
        }
    }
}

/// Checks that `edges` (sorted, distinct or not) form one simple cycle.
fn check_simple_cycle(graph: &OrientedGraph, edges: &[usize]) -> Result<(), ComplexError> {
    let set: BTreeSet<usize> = edges.iter().copied().collect();
    if set.len() != edges.len() {
        return Err(ComplexError::NotACycle {
            reason: "edge listed more than once".into(),
        });
    }
    if set.len() < 3 {
        return Err(ComplexError::NotACycle {
            reason: format!("{} edges cannot close a simple cycle", set.len()),
        });
    }
    let mut degree: HashMap<usize, usize> = HashMap::new();
    for &e in &set {
        graph.check_edge(e)?;
        let (s, t) = graph.edge(e);
        *degree.entry(s).or_default() += 1;
        *degree.entry(t).or_default() += 1;
    }
    if let Some((&node, &d)) = degree.iter().filter(|(_, &d)| d != 2).min() {
        return Err(ComplexError::NotACycle {
            reason: format!("node {node} has degree {d}"),
        });
    }
    // Every node has degree 2, so the edges split into disjoint cycles; one
    // cycle means one connected component.
    let mut uf = crate::unionfind::UnionFind::new(graph.node_count());
    for &e in &set {
        let (s, t) = graph.edge(e);
        uf.union(s, t);
    }
    let first = *degree.keys().next().expect("nonempty");
    if degree.keys().any(|&v| !uf.connected(v, first)) {
        return Err(ComplexError::NotACycle {
            reason: "edges form more than one cycle".into(),
        });
    }
    Ok(())
}

/// Boundary of the closed walk `walk` (first node repeated at the end).
pub fn validate_cycle(graph: &OrientedGraph, walk: &[usize]) -> Result<CellBoundary, ComplexError> {
    if walk.len() < 4 {
        return Err(ComplexError::TooShort {
            len: walk.len().saturating_sub(1),
        });
    }
    let (first, last) = (walk[0], walk[walk.len() - 1]);
    if first != last {
        return Err(ComplexError::OpenWalk { first, last });
    }
    let mut seen = HashSet::with_capacity(walk.len());
    for &node in &walk[..walk.len() - 1] {
        if node >= graph.node_count() {
            return Err(ComplexError::NodeOutOfRange {
                edge: usize::MAX,
                node,
                node_count: graph.node_count(),
            });
        }
        if !seen.insert(node) {
            return Err(ComplexError::RepeatedNode { node });
        }
    }
    let mut entries = Vec::with_capacity(walk.len() - 1);
    for pair in walk.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let e = graph
            .edge_between(a, b)
            .ok_or(ComplexError::MissingEdge { a, b })?;
        let sign = if graph.edge(e).0 == a { 1 } else { -1 };
        entries.push((e, sign));
    }
    entries.sort_unstable();
    Ok(CellBoundary { entries })
}

/// Orients a cycle given as an unordered edge set. Traversal starts at the
/// lowest node of the cycle and moves first toward its lower cycle neighbor.
pub fn boundary_from_edge_set(
    graph: &OrientedGraph,
    edge_ids: &BTreeSet<usize>,
) -> Result<CellBoundary, ComplexError> {
    let edges: Vec<usize> = edge_ids.iter().copied().collect();
    check_simple_cycle(graph, &edges)?;
    let mut incident: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for &e in &edges {
        let (s, t) = graph.edge(e);
        incident.entry(s).or_default().push((t, e));
        incident.entry(t).or_default().push((s, e));
    }
    let start = *incident.keys().min().expect("nonempty cycle");
    let mut walk = Vec::with_capacity(edges.len() + 1);
    walk.push(start);
    let (mut prev_edge, mut current) = incident[&start]
        .iter()
        .map(|&(v, e)| (e, v))
        .min_by_key(|&(_, v)| v)
        .expect("degree 2");
    while current != start {
        walk.push(current);
        let &(next, e) = incident[&current]
            .iter()
            .find(|&&(_, e)| e != prev_edge)
            .expect("degree 2");
        prev_edge = e;
        current = next;
    }
    walk.push(start);
    validate_cycle(graph, &walk)
}

/// The unique cycle formed by `closing_edge` and the forest path between its
/// endpoints, as a sorted edge list.
pub fn tree_cycle(
    graph: &OrientedGraph,
    forest_edges: &[usize],
    closing_edge: usize,
) -> Result<BTreeSet<usize>, ComplexError> {
    graph.check_edge(closing_edge)?;
    let mut adjacency: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for &e in forest_edges {
        graph.check_edge(e)?;
        if e == closing_edge {
            return Err(ComplexError::ClosingEdgeInForest { edge: e });
        }
        let (s, t) = graph.edge(e);
        adjacency.entry(s).or_default().push((t, e));
        adjacency.entry(t).or_default().push((s, e));
    }
    let (a, b) = graph.edge(closing_edge);
    // BFS from a, remembering the edge used to reach each node.
    let mut reached: HashMap<usize, Option<(usize, usize)>> = HashMap::new();
    reached.insert(a, None);
    let mut queue = VecDeque::from([a]);
    while let Some(u) = queue.pop_front() {
        if u == b {
            break;
        }
        for &(v, e) in adjacency.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if !reached.contains_key(&v) {
                reached.insert(v, Some((u, e)));
                queue.push_back(v);
            }
        }
    }
    if !reached.contains_key(&b) {
        return Err(ComplexError::NoPath {
            edge: closing_edge,
            a,
            b,
        });
    }
    let mut cycle = BTreeSet::from([closing_edge]);
    let mut node = b;
    while let Some((prev, e)) = reached[&node] {
        cycle.insert(e);
        node = prev;
    }
    Ok(cycle)
}

/// A graph together with an ordered list of distinct 2-cells.
#[derive(Debug, Clone)]
pub struct CellComplex {
    graph: Arc<OrientedGraph>,
    cells: Vec<CellBoundary>,
    keys: HashSet<Vec<(usize, i8)>>,
}

/// Result of [`add_cells`].
#[derive(Debug, Clone)]
pub struct CellAddition {
    pub complex: CellComplex,
    /// Batch positions of the cells that were appended.
    pub added: Vec<usize>,
    /// Batch positions of cells dropped as duplicates (up to sign).
    pub dropped: Vec<usize>,
}

impl CellComplex {
    /// A complex with no 2-cells.
    pub fn empty(graph: Arc<OrientedGraph>) -> Self {
        Self {
            graph,
            cells: Vec::new(),
            keys: HashSet::new(),
        }
    }

    /// Builds a complex, rejecting invalid or duplicate cells.
    pub fn new(graph: Arc<OrientedGraph>, cells: Vec<CellBoundary>) -> Result<Self, ComplexError> {
        let mut complex = Self::empty(graph);
        for (index, cell) in cells.into_iter().enumerate() {
            let cell = CellBoundary::from_signed_edges(&complex.graph, cell.entries)
                .map_err(|e| ComplexError::InvalidCell {
                    index,
                    source: Box::new(e),
                })?;
            if !complex.keys.insert(cell.unsigned_key()) {
                return Err(ComplexError::InvalidCell {
                    index,
                    source: Box::new(ComplexError::NotACycle {
                        reason: "duplicate of an earlier cell".into(),
                    }),
                });
            }
            complex.cells.push(cell);
        }
        Ok(complex)
    }

    pub fn graph(&self) -> &OrientedGraph {
        &self.graph
    }

    pub fn shared_graph(&self) -> &Arc<OrientedGraph> {
        &self.graph
    }

    pub fn cells(&self) -> &[CellBoundary] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// `true` if the complex already holds `cell` or its negation.
    pub fn contains(&self, cell: &CellBoundary) -> bool {
        self.keys.contains(&cell.unsigned_key())
    }

    /// Edge-to-cell boundary matrix `B₂` (`m × k`).
    pub fn boundary_matrix(&self) -> CscMatrix<f64> {
        boundary_matrix(self.graph.edge_count(), &self.cells)
    }
}

/// Stacks boundary vectors as the columns of a sparse `edge_count × cells.len()` matrix.
pub fn boundary_matrix(edge_count: usize, cells: &[CellBoundary]) -> CscMatrix<f64> {
    let mut coo = CooMatrix::new(edge_count, cells.len());
    for (j, cell) in cells.iter().enumerate() {
        for &(e, s) in cell.entries() {
            coo.push(e, j, f64::from(s));
        }
    }
    CscMatrix::from(&coo)
}

/// Appends `new_cells` in order, dropping duplicates of existing or earlier
/// batch cells.
pub fn add_cells(
    complex: &CellComplex,
    new_cells: &[CellBoundary],
) -> Result<CellAddition, ComplexError> {
    let mut next = complex.clone();
    let mut added = Vec::new();
    let mut dropped = Vec::new();
    for (index, cell) in new_cells.iter().enumerate() {
        let cell = CellBoundary::from_signed_edges(&next.graph, cell.entries.clone()).map_err(
            |e| ComplexError::InvalidCell {
                index,
                source: Box::new(e),
            },
        )?;
        if next.keys.insert(cell.unsigned_key()) {
            next.cells.push(cell);
            added.push(index);
        } else {
            dropped.push(index);
        }
    }
    Ok(CellAddition {
        complex: next,
        added,
        dropped,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Triangle with e0=(0,1), e1=(1,2), e2=(0,2).
    pub fn t3() -> OrientedGraph {
        OrientedGraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    /// K4 with lexicographically ordered edges.
    pub fn k4() -> OrientedGraph {
        OrientedGraph::new(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }
}
