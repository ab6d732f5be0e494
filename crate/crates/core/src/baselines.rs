//! Comparison algorithms: a maximum-spanning-tree candidate heuristic with
//! greedy single-cell selection, and random cell placement.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::complex::{
    add_cells, boundary_from_edge_set, tree_cycle, CellBoundary, CellComplex, OrientedGraph,
};
use crate::hodge::{harmonic_projection, remove_gradient, FlowMatrix, SolverConfig};
use crate::mfci::{evaluate_and_select, Inference, MfciError};
use crate::trace::TraceBuilder;
use crate::unionfind::UnionFind;

/// Nonnegative, finite per-edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(Vec<f64>);

impl EdgeWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, MfciError> {
        if let Some(e) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(MfciError::InvalidConfig(format!(
                "edge weight {} on edge {e} is not a finite nonnegative number",
                weights[e]
            )));
        }
        Ok(Self(weights))
    }

    /// `w_e = Σ_i |H_{e,i}|`.
    pub fn from_flows(h: &FlowMatrix) -> Self {
        Self(h.matrix().row_iter().map(|r| r.abs().sum()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Greedy maximum-weight spanning forest (heaviest first, lower id on ties).
pub fn max_spanning_tree(
    graph: &OrientedGraph,
    weights: &EdgeWeights,
) -> Result<BTreeSet<usize>, MfciError> {
    let w = weights.as_slice();
    if w.len() != graph.edge_count() {
        return Err(MfciError::LengthMismatch {
            expected: graph.edge_count(),
            actual: w.len(),
        });
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    Ok(greedy_forest(graph, order))
}

fn greedy_forest(graph: &OrientedGraph, order: Vec<usize>) -> BTreeSet<usize> {
    let mut uf = UnionFind::new(graph.node_count());
    order
        .into_iter()
        .filter(|&e| {
            let (s, t) = graph.edge(e);
            uf.union(s, t)
        })
        .collect()
}

/// Up to `count` cycles, each closing one heavy non-tree edge over the
/// maximum spanning tree of the aggregate absolute flow. Non-tree edges are
/// visited by decreasing weight; cycles already in the complex are skipped.
/// Each cycle is oriented to agree with the net flow on its closing edge.
pub fn sph_candidates(
    complex: &CellComplex,
    h: &FlowMatrix,
    count: usize,
) -> Result<Vec<CellBoundary>, MfciError> {
    let graph = complex.graph();
    let weights = EdgeWeights::from_flows(h);
    let w = weights.as_slice();
    let tree = max_spanning_tree(graph, &weights)?;
    let tree_edges: Vec<usize> = tree.iter().copied().collect();
    let mut closing: Vec<usize> = (0..graph.edge_count())
        .filter(|e| !tree.contains(e))
        .collect();
    closing.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut out = Vec::new();
    for e in closing {
        if out.len() == count {
            break;
        }
        let cycle = tree_cycle(graph, &tree_edges, e)?;
        let mut cell = boundary_from_edge_set(graph, &cycle)?;
        let net: f64 = h.matrix().row(e).sum();
        let sign = cell.sign_at(e).expect("closing edge lies on its cycle");
        if net != 0.0 && (net > 0.0) != (sign > 0) {
            cell = cell.negated();
        }
        if !complex.contains(&cell) {
            out.push(cell);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphConfig {
    pub total_cells: usize,
    /// Candidates evaluated per iteration.
    pub candidates: usize,
    pub solver: SolverConfig,
}

/// Adds one cell per iteration: the candidate whose addition leaves the
/// smallest exact loss. Each iteration costs one solve per candidate plus one
/// for the harmonic refresh.
pub fn infer_sph(
    graph: Arc<OrientedGraph>,
    flows: &FlowMatrix,
    cfg: &SphConfig,
) -> Result<Inference, MfciError> {
    if cfg.candidates == 0 {
        return Err(MfciError::InvalidConfig("candidates must be at least 1".into()));
    }
    cfg.solver.validate()?;
    let mut tb = TraceBuilder::new();
    tb.clock.resume();
    let (gradient_free, stats) = remove_gradient(&graph, flows, &cfg.solver)?;
    tb.stats += stats;
    tb.clock.pause();

    let mut complex = CellComplex::empty(graph);
    let mut h = gradient_free.clone();
    tb.record(Vec::new(), 0, h.frobenius_norm(), 0, false);
    while complex.cell_count() < cfg.total_cells {
        tb.clock.resume();
        let candidates = sph_candidates(&complex, &h, cfg.candidates)?;
        if candidates.is_empty() {
            tb.clock.pause();
            break;
        }
        let selection =
            evaluate_and_select(&complex, &gradient_free, &candidates, 1, true, &cfg.solver)?;
        tb.stats += selection.stats;
        complex = add_cells(&complex, &selection.chosen)?.complex;
        let (next, stats) = harmonic_projection(&complex, &gradient_free, &cfg.solver)?;
        tb.stats += stats;
        h = next;
        tb.clock.pause();
        tb.record(
            selection.chosen,
            complex.cell_count(),
            h.frobenius_norm(),
            cfg.candidates - candidates.len(),
            false,
        );
    }
    Ok(Inference {
        complex,
        trace: tb.trace,
    })
}

/// Cycle closed by a uniformly random non-tree edge over a spanning forest
/// grown from a random edge order.
pub fn random_tree_cycle<R: Rng + ?Sized>(
    graph: &OrientedGraph,
    rng: &mut R,
) -> Result<CellBoundary, MfciError> {
    let mut order: Vec<usize> = (0..graph.edge_count()).collect();
    order.shuffle(rng);
    let forest = greedy_forest(graph, order);
    let outside: Vec<usize> = (0..graph.edge_count())
        .filter(|e| !forest.contains(e))
        .collect();
    let &closing = outside.choose(rng).ok_or(MfciError::GraphIsForest)?;
    let forest: Vec<usize> = forest.into_iter().collect();
    let cycle = tree_cycle(graph, &forest, closing)?;
    Ok(boundary_from_edge_set(graph, &cycle)?)
}

/// Resampling attempts per cell before accepting a shortfall.
pub const RANDOM_RESAMPLES: usize = 100;

/// Adds `total_cells` random cells, recording the exact loss after each.
pub fn infer_random<R: Rng + ?Sized>(
    graph: Arc<OrientedGraph>,
    flows: &FlowMatrix,
    total_cells: usize,
    solver: &SolverConfig,
    rng: &mut R,
) -> Result<Inference, MfciError> {
    if graph.is_forest() {
        return Err(MfciError::GraphIsForest);
    }
    solver.validate()?;
    let mut tb = TraceBuilder::new();
    tb.clock.resume();
    let (gradient_free, stats) = remove_gradient(&graph, flows, solver)?;
    tb.stats += stats;
    tb.clock.pause();

    let mut complex = CellComplex::empty(graph.clone());
    tb.record(Vec::new(), 0, gradient_free.frobenius_norm(), 0, false);
    while complex.cell_count() < total_cells {
        tb.clock.resume();
        let mut fresh = None;
        let mut rejected = 0;
        for _ in 0..=RANDOM_RESAMPLES {
            let cell = random_tree_cycle(&graph, rng)?;
            if complex.contains(&cell) {
                rejected += 1;
            } else {
                fresh = Some(cell);
                break;
            }
        }
        let Some(cell) = fresh else {
            tb.clock.pause();
            break;
        };
        complex = add_cells(&complex, std::slice::from_ref(&cell))?.complex;
        let (h, stats) = harmonic_projection(&complex, &gradient_free, solver)?;
        tb.stats += stats;
        tb.clock.pause();
        tb.record(
            vec![cell],
            complex.cell_count(),
            h.frobenius_norm(),
            rejected,
            false,
        );
    }
    Ok(Inference {
        complex,
        trace: tb.trace,
    })
}
