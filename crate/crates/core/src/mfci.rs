//! Matrix-factorization cell inference.
//!
//! Each iteration factors the current harmonic flow, turns the best factor
//! columns into simple cycles, optionally ranks those by the exact loss they
//! would leave behind, and adds the winners to the complex. The harmonic flow
//! is then refreshed either exactly (one sparse solve) or with the cheap
//! projector update built from the chosen boundaries and the factorization.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::complex::{
    add_cells, boundary_from_edge_set, boundary_matrix, tree_cycle, validate_cycle, CellBoundary,
    CellComplex, ComplexError, OrientedGraph,
};
use crate::factorize::{
    column_scores, fast_ica, select_columns, truncated_svd, FactorizationMethod, FactorizeError,
    Factorization, IcaConfig,
};
use crate::hodge::{
    approx_harmonic_update, harmonic_projection, least_squares, remove_gradient, FlowMatrix,
    HodgeError, SolveStats, SolverConfig,
};
use crate::trace::{InferenceTrace, TraceBuilder};
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MfciError {
    #[error("invalid inference configuration: {0}")]
    InvalidConfig(String),
    #[error("graph contains no cycle")]
    GraphIsForest,
    #[error("random walk dead-ended on all {attempts} attempts")]
    WalkFailed { attempts: usize },
    #[error("edge vector has length {actual}, graph has {expected} edges")]
    LengthMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Hodge(#[from] HodgeError),
    #[error(transparent)]
    Factorize(#[from] FactorizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discretization {
    Deterministic,
    RandomWalk,
}

impl std::str::FromStr for Discretization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(Self::Deterministic),
            "random_walk" => Ok(Self::RandomWalk),
            other => Err(format!(
                "unknown discretization `{other}` (deterministic|random_walk)"
            )),
        }
    }
}

impl std::fmt::Display for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Deterministic => "deterministic",
            Self::RandomWalk => "random_walk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectionMode {
    Exact,
    Approximate,
}

impl std::str::FromStr for ProjectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "approximate" => Ok(Self::Approximate),
            other => Err(format!("unknown projection mode `{other}` (exact|approximate)")),
        }
    }
}

impl std::fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Approximate => "approximate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    /// Cell budget `k`.
    pub total_cells: usize,
    /// Candidates generated per iteration (`l`).
    pub candidates: usize,
    /// Cells added per iteration (`l′`).
    pub added_per_iteration: usize,
    /// Factorization rank; `None` uses `candidates`.
    pub rank: Option<usize>,
    pub method: FactorizationMethod,
    pub discretization: Discretization,
    /// Ignored (treated as `true`) when fewer cells are added than generated.
    pub evaluate_candidates: bool,
    pub projection: ProjectionMode,
    pub solver: SolverConfig,
    /// ICA settings; the seed is drawn from the inference rng per iteration.
    pub ica: IcaConfig,
}

impl InferenceConfig {
    /// "`a`oo`b`": keep the best `added` of `candidates` with evaluation.
    pub fn best_of(total_cells: usize, added: usize, candidates: usize) -> Self {
        Self {
            total_cells,
            candidates,
            added_per_iteration: added,
            rank: None,
            method: FactorizationMethod::Svd,
            discretization: Discretization::Deterministic,
            evaluate_candidates: true,
            projection: ProjectionMode::Exact,
            solver: SolverConfig::default(),
            ica: IcaConfig::default(),
        }
    }

    /// "`l`oo-1": add every candidate without evaluation.
    pub fn all_of(total_cells: usize, candidates: usize) -> Self {
        Self {
            evaluate_candidates: false,
            ..Self::best_of(total_cells, candidates, candidates)
        }
    }

    pub fn rank(&self) -> usize {
        self.rank.unwrap_or(self.candidates)
    }

    pub fn evaluates(&self) -> bool {
        self.evaluate_candidates || self.added_per_iteration < self.candidates
    }

    pub fn validate(&self, edges: usize, samples: usize) -> Result<(), MfciError> {
        let (k, l, lp, r) = (
            self.total_cells,
            self.candidates,
            self.added_per_iteration,
            self.rank(),
        );
        let fail = |msg: String| Err(MfciError::InvalidConfig(msg));
        if lp < 1 {
            return fail("added_per_iteration must be at least 1".into());
        }
        if lp > l {
            return fail(format!("added_per_iteration {lp} exceeds candidates {l}"));
        }
        if l > r {
            return fail(format!("candidates {l} exceed rank {r}"));
        }
        let max_rank = edges.min(samples);
        if r > max_rank {
            return fail(format!("rank {r} exceeds min(edges, samples) = {max_rank}"));
        }
        if k < lp {
            return fail(format!("total_cells {k} is below added_per_iteration {lp}"));
        }
        if self.method == FactorizationMethod::Ica && samples < 2 {
            return fail("ICA needs at least 2 flow samples".into());
        }
        self.solver.validate()?;
        Ok(())
    }
}

fn check_length(graph: &OrientedGraph, b: &[f64]) -> Result<(), MfciError> {
    if b.len() != graph.edge_count() {
        return Err(MfciError::LengthMismatch {
            expected: graph.edge_count(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Flips `cell` if its sign on the cycle edge with the largest `|b|` (lowest
/// id on ties) disagrees with `b` there.
fn align_sign(cell: CellBoundary, b: &[f64]) -> CellBoundary {
    let mut pivot: Option<(usize, i8)> = None;
    for &(e, s) in cell.entries() {
        if pivot.map_or(true, |(p, _)| b[e].abs() > b[p].abs()) {
            pivot = Some((e, s));
        }
    }
    match pivot {
        Some((e, s)) if b[e] != 0.0 && (b[e] > 0.0) != (s > 0) => cell.negated(),
        _ => cell,
    }
}

/// Adds edges by decreasing `|b|` (lower id on ties) to an empty forest and
/// returns the first cycle that closes, oriented to agree with `b`.
pub fn discretize_deterministic(
    graph: &OrientedGraph,
    b: &[f64],
) -> Result<CellBoundary, MfciError> {
    check_length(graph, b)?;
    let mut order: Vec<usize> = (0..graph.edge_count()).collect();
    order.sort_by(|&x, &y| b[y].abs().total_cmp(&b[x].abs()).then(x.cmp(&y)));
    let mut uf = UnionFind::new(graph.node_count());
    let mut forest = Vec::new();
    for e in order {
        let (s, t) = graph.edge(e);
        if uf.union(s, t) {
            forest.push(e);
        } else {
            let cycle = tree_cycle(graph, &forest, e)?;
            let cell = boundary_from_edge_set(graph, &cycle)?;
            return Ok(align_sign(cell, b));
        }
    }
    Err(MfciError::GraphIsForest)
}

/// Restarts allowed after the first random walk dead-ends.
pub const WALK_RESTARTS: usize = 20;

/// Random walk weighted by `|b|` from the source of the heaviest edge until
/// it revisits a node; the closed loop is the candidate.
///
/// Each step crosses an unused incident edge, chosen with probability
/// proportional to `|b_e|` among those with nonzero weight, or uniformly if
/// all remaining weights are zero.
pub fn discretize_random_walk<R: Rng + ?Sized>(
    graph: &OrientedGraph,
    b: &[f64],
    rng: &mut R,
) -> Result<CellBoundary, MfciError> {
    check_length(graph, b)?;
    if graph.edge_count() == 0 {
        return Err(MfciError::WalkFailed { attempts: 0 });
    }
    let heaviest = (0..graph.edge_count())
        .max_by(|&x, &y| b[x].abs().total_cmp(&b[y].abs()).then(y.cmp(&x)))
        .expect("at least one edge");
    let start = graph.edge(heaviest).0;
    let attempts = WALK_RESTARTS + 1;
    for _ in 0..attempts {
        let mut path = vec![start];
        let mut position = HashMap::from([(start, 0usize)]);
        let mut used = HashSet::new();
        let mut current = start;
        loop {
            let options: Vec<(usize, usize)> = graph
                .neighbors(current)
                .iter()
                .copied()
                .filter(|(_, e)| !used.contains(e))
                .collect();
            if options.is_empty() {
                break;
            }
            let total: f64 = options.iter().map(|&(_, e)| b[e].abs()).sum();
            let pick = if total > 0.0 {
                let mut target = rng.gen::<f64>() * total;
                let mut chosen = None;
                for (i, &(_, e)) in options.iter().enumerate() {
                    let w = b[e].abs();
                    if w > 0.0 {
                        chosen = Some(i);
                        if target < w {
                            break;
                        }
                        target -= w;
                    }
                }
                chosen.expect("positive total weight")
            } else {
                rng.gen_range(0..options.len())
            };
            let (next, e) = options[pick];
            used.insert(e);
            if let Some(&p) = position.get(&next) {
                let mut walk = path[p..].to_vec();
                walk.push(next);
                let cell = validate_cycle(graph, &walk)?;
                return Ok(align_sign(cell, b));
            }
            position.insert(next, path.len());
            path.push(next);
            current = next;
        }
    }
    Err(MfciError::WalkFailed { attempts })
}

/// Output of one candidate-search step.
#[derive(Debug, Clone)]
pub struct CandidateSearch {
    pub candidates: Vec<CellBoundary>,
    pub factorization: Factorization,
    pub failed: usize,
    pub duplicates: usize,
}

/// Factors `h`, keeps the `l` best-scoring columns and discretizes them.
/// Failures and duplicates (of existing cells or earlier candidates) are
/// dropped.
pub fn candidate_search<R: Rng + ?Sized>(
    complex: &CellComplex,
    h: &FlowMatrix,
    cfg: &InferenceConfig,
    rng: &mut R,
) -> Result<CandidateSearch, MfciError> {
    let graph = complex.graph();
    let factorization = match cfg.method {
        FactorizationMethod::Svd => truncated_svd(h, cfg.rank())?,
        FactorizationMethod::Ica => {
            let ica = IcaConfig {
                seed: rng.gen(),
                ..cfg.ica
            };
            fast_ica(h, cfg.rank(), &ica)?
        }
    };
    let scores = column_scores(h, &factorization);
    let columns = select_columns(&factorization, &scores, cfg.candidates);
    let mut candidates: Vec<CellBoundary> = Vec::with_capacity(columns.len());
    let mut seen = HashSet::new();
    let (mut failed, mut duplicates) = (0, 0);
    for column in &columns {
        let cell = match cfg.discretization {
            Discretization::Deterministic => discretize_deterministic(graph, &column.values),
            Discretization::RandomWalk => discretize_random_walk(graph, &column.values, rng),
        };
        match cell {
            Ok(cell) => {
                if complex.contains(&cell) || !seen.insert(cell.unsigned_key()) {
                    duplicates += 1;
                } else {
                    candidates.push(cell);
                }
            }
            Err(_) => failed += 1,
        }
    }
    Ok(CandidateSearch {
        candidates,
        factorization,
        failed,
        duplicates,
    })
}

/// Harmonic loss of `complex ∪ {extra}` against gradient-free `flows`.
pub fn loss_with_cell(
    complex: &CellComplex,
    extra: &CellBoundary,
    flows: &FlowMatrix,
    solver: &SolverConfig,
) -> Result<(f64, SolveStats), MfciError> {
    let mut cells = complex.cells().to_vec();
    cells.push(extra.clone());
    let b2 = boundary_matrix(complex.graph().edge_count(), &cells);
    let ls = least_squares(&b2, flows.matrix(), solver)?;
    let residual = flows.matrix() - crate::hodge::sparse_times_dense(&b2, &ls.solution);
    Ok((residual.norm(), ls.stats))
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub chosen: Vec<CellBoundary>,
    /// Post-addition loss per candidate (candidate order); empty when not evaluated.
    pub losses: Vec<f64>,
    pub stats: SolveStats,
}

/// Picks `count` candidates. With `evaluate`, each candidate is scored by
/// the exact loss after adding it alone (one solve each) and the lowest
/// losses win, earlier candidates first on ties. Without evaluation the
/// first `count` candidates are returned and no solve is made.
pub fn evaluate_and_select(
    complex: &CellComplex,
    flows: &FlowMatrix,
    candidates: &[CellBoundary],
    count: usize,
    evaluate: bool,
    solver: &SolverConfig,
) -> Result<Selection, MfciError> {
    if !evaluate {
        return Ok(Selection {
            chosen: candidates.iter().take(count).cloned().collect(),
            losses: Vec::new(),
            stats: SolveStats::default(),
        });
    }
    let evaluated: Vec<(f64, SolveStats)> = candidates
        .par_iter()
        .map(|c| loss_with_cell(complex, c, flows, solver))
        .collect::<Result<_, _>>()?;
    let mut stats = SolveStats::default();
    for (_, s) in &evaluated {
        stats += *s;
    }
    let losses: Vec<f64> = evaluated.iter().map(|(l, _)| *l).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    Ok(Selection {
        chosen: order
            .into_iter()
            .take(count)
            .map(|i| candidates[i].clone())
            .collect(),
        losses,
        stats,
    })
}

/// Inferred complex plus its per-iteration trace.
#[derive(Debug, Clone)]
pub struct Inference {
    pub complex: CellComplex,
    pub trace: InferenceTrace,
}

/// Runs the full inference loop until `total_cells` cells are placed, no
/// candidate survives, or the remaining harmonic flow is numerically zero.
///
/// The gradient is removed once up front (one solver call). Reported losses
/// are always exact; in approximate mode they are recomputed outside the
/// timed and counted sections. The last iteration adds at most the cells
/// still missing from the budget.
pub fn infer_mfci<R: Rng + ?Sized>(
    graph: Arc<OrientedGraph>,
    flows: &FlowMatrix,
    cfg: &InferenceConfig,
    rng: &mut R,
) -> Result<Inference, MfciError> {
    cfg.validate(flows.edge_count(), flows.sample_count())?;
    if flows.edge_count() != graph.edge_count() {
        return Err(MfciError::LengthMismatch {
            expected: graph.edge_count(),
            actual: flows.edge_count(),
        });
    }
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
        let search = match candidate_search(&complex, &h, cfg, rng) {
            Ok(search) => search,
            Err(MfciError::Factorize(FactorizeError::DegenerateInput { .. })) => {
                tb.clock.pause();
                break;
            }
            Err(e) => return Err(e),
        };
        if search.candidates.is_empty() {
            tb.clock.pause();
            break;
        }
        let budget = cfg
            .added_per_iteration
            .min(cfg.total_cells - complex.cell_count());
        let selection = evaluate_and_select(
            &complex,
            &gradient_free,
            &search.candidates,
            budget,
            cfg.evaluates(),
            &cfg.solver,
        )?;
        tb.stats += selection.stats;
        let addition = add_cells(&complex, &selection.chosen)?;
        complex = addition.complex;
        let added: Vec<CellBoundary> = addition
            .added
            .iter()
            .map(|&i| selection.chosen[i].clone())
            .collect();
        let mut flagged = false;
        match cfg.projection {
            ProjectionMode::Exact => {
                let (next, stats) = harmonic_projection(&complex, &gradient_free, &cfg.solver)?;
                tb.stats += stats;
                h = next;
            }
            ProjectionMode::Approximate => {
                let update = approx_harmonic_update(&h, &added, &search.factorization)?;
                flagged = update.degenerate_span();
                h = update.flows;
            }
        }
        tb.clock.pause();

        let loss = match cfg.projection {
            ProjectionMode::Exact => h.frobenius_norm(),
            ProjectionMode::Approximate => {
                harmonic_projection(&complex, &gradient_free, &cfg.solver)?
                    .0
                    .frobenius_norm()
            }
        };
        let dropped = search.failed + search.duplicates;
        tb.record(added, complex.cell_count(), loss, dropped, flagged);
    }
    Ok(Inference {
        complex,
        trace: tb.trace,
    })
}

/// Edge ids of `cell` as a set, for callers comparing cells by support.
pub fn support_set(cell: &CellBoundary) -> BTreeSet<usize> {
    cell.support().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::fixtures::{k4, t3};
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(cell: &CellBoundary, m: usize) -> Vec<i8> {
        cell.to_dense(m).iter().map(|&x| x as i8).collect()
    }

    /// All simple cycles of a small graph as edge sets (test oracle).
    pub(crate) fn enumerate_cycles(graph: &OrientedGraph) -> Vec<BTreeSet<usize>> {
        fn extend(
            graph: &OrientedGraph,
            start: usize,
            current: usize,
            on_path: &mut Vec<bool>,
            edges: &mut Vec<usize>,
            out: &mut BTreeSet<BTreeSet<usize>>,
        ) {
            for &(next, e) in graph.neighbors(current) {
                if next == start && edges.len() >= 2 && !edges.contains(&e) {
                    let mut cycle: BTreeSet<usize> = edges.iter().copied().collect();
                    cycle.insert(e);
                    out.insert(cycle);
                } else if next > start && !on_path[next] {
                    on_path[next] = true;
                    edges.push(e);
                    extend(graph, start, next, on_path, edges, out);
                    edges.pop();
                    on_path[next] = false;
                }
            }
        }
        let mut out = BTreeSet::new();
        for start in 0..graph.node_count() {
            let mut on_path = vec![false; graph.node_count()];
            on_path[start] = true;
            extend(graph, start, start, &mut on_path, &mut Vec::new(), &mut out);
        }
        out.into_iter().collect()
    }

    #[test]
    fn k4_has_seven_simple_cycles() {
        assert_eq!(enumerate_cycles(&k4()).len(), 7);
    }

    #[test]
    fn deterministic_discretization_examples() {
        let cell = discretize_deterministic(&k4(), &[0.9, -0.5, 0.1, 0.8, 0.05, 0.02]).unwrap();
        assert_eq!(dense(&cell, 6), vec![1, -1, 0, 1, 0, 0]);
        let cell = discretize_deterministic(&t3(), &[1., 1., -1.]).unwrap();
        assert_eq!(dense(&cell, 3), vec![1, 1, -1]);
    }

    #[test]
    fn deterministic_discretization_recovers_every_k4_cycle() {
        let g = k4();
        for cycle in enumerate_cycles(&g) {
            let planted = boundary_from_edge_set(&g, &cycle).unwrap();
            for sign in [1.0, -1.0] {
                let b: Vec<f64> = planted.to_dense(6).iter().map(|v| v * sign).collect();
                let got = discretize_deterministic(&g, &b).unwrap();
                let want = if sign > 0.0 { planted.clone() } else { planted.negated() };
                assert_eq!(got, want, "cycle {cycle:?}");
            }
        }
    }

    #[test]
    fn deterministic_discretization_on_forest_fails() {
        let path = OrientedGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            discretize_deterministic(&path, &[1., 1.]),
            Err(MfciError::GraphIsForest)
        );
        assert!(matches!(
            discretize_deterministic(&path, &[1.]),
            Err(MfciError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn random_walk_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let cell = discretize_random_walk(&t3(), &[1., 1., -1.], &mut rng).unwrap();
            assert_eq!(dense(&cell, 3), vec![1, 1, -1]);
        }
        let tree = OrientedGraph::new(4, vec![(0, 1), (1, 2), (1, 3)]).unwrap();
        assert_eq!(
            discretize_random_walk(&tree, &[1., 1., 1.], &mut rng),
            Err(MfciError::WalkFailed { attempts: WALK_RESTARTS + 1 })
        );
    }

    #[test]
    fn random_walk_stays_on_weighted_support() {
        // Support {e0, e3, e1} = triangle 0-1-2 with equal weights: from node
        // 0 every branch of the walk tree closes that triangle.
        let g = k4();
        let b = [1., 1., 0., 1., 0., 0.];
        let want = discretize_deterministic(&g, &[1., -1., 0., 1., 0., 0.]).unwrap();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cell = discretize_random_walk(&g, &b, &mut rng).unwrap();
            assert_eq!(support_set(&cell), support_set(&want));
        }
    }

    #[test]
    fn random_walk_is_seed_deterministic() {
        let g = k4();
        let b = [0.3, -0.2, 0.9, 0.1, 0.4, -0.7];
        let a = discretize_random_walk(&g, &b, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let c = discretize_random_walk(&g, &b, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, c);
        assert!(g.divergence(a.entries()).iter().all(|&d| d == 0));
    }

    fn flows_from(columns: &[Vec<f64>]) -> FlowMatrix {
        let cols: Vec<DVector<f64>> = columns.iter().map(|c| DVector::from_vec(c.clone())).collect();
        FlowMatrix::new(DMatrix::from_columns(&cols)).unwrap()
    }

    #[test]
    fn candidate_search_on_triangle() {
        let g = Arc::new(t3());
        let cfg = InferenceConfig::best_of(1, 1, 1);
        let h = flows_from(&[vec![1., 1., -1.]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let search = candidate_search(&CellComplex::empty(g), &h, &cfg, &mut rng).unwrap();
        assert_eq!(search.candidates.len(), 1);
        assert_eq!(dense(&search.candidates[0], 3), vec![1, 1, -1]);
    }

    /// Two triangles 0-1-2 and 4-5-6 joined through node 3.
    fn bridged_triangles() -> OrientedGraph {
        OrientedGraph::new(
            7,
            vec![(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (4, 6)],
        )
        .unwrap()
    }

    #[test]
    fn candidate_search_finds_both_planted_triangles() {
        let g = Arc::new(bridged_triangles());
        let t1 = validate_cycle(&g, &[0, 1, 2, 0]).unwrap();
        let t2 = validate_cycle(&g, &[4, 5, 6, 4]).unwrap();
        let (b1, b2) = (t1.to_dense(8), t2.to_dense(8));
        let coefs = [(1.0, 0.2), (-0.5, 1.0), (0.3, -2.0), (2.0, 0.7)];
        let cols: Vec<Vec<f64>> = coefs
            .iter()
            .map(|&(x, y)| (0..8).map(|e| x * b1[e] + y * b2[e]).collect())
            .collect();
        let cfg = InferenceConfig::best_of(2, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let search =
            candidate_search(&CellComplex::empty(g), &flows_from(&cols), &cfg, &mut rng).unwrap();
        let got: BTreeSet<_> = search.candidates.iter().map(support_set).collect();
        let want: BTreeSet<_> = [support_set(&t1), support_set(&t2)].into();
        assert_eq!(got, want);
    }

    #[test]
    fn candidate_search_deduplicates_single_cycle() {
        let g = Arc::new(t3());
        let cfg = InferenceConfig::best_of(1, 1, 3);
        let cols = vec![vec![1., 1., -1.], vec![0.5, 0., 1.], vec![0., 2., 1.]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let search =
            candidate_search(&CellComplex::empty(g), &flows_from(&cols), &cfg, &mut rng).unwrap();
        assert_eq!(search.candidates.len(), 1);
        assert_eq!(search.duplicates, 2);
    }

    #[test]
    fn evaluate_and_select_examples() {
        let solver = SolverConfig::default();
        let g = Arc::new(t3());
        let tri = validate_cycle(&g, &[0, 1, 2, 0]).unwrap();
        let empty = CellComplex::empty(g);
        let f = flows_from(&[vec![1., 1., -1.]]);
        let sel = evaluate_and_select(&empty, &f, &[tri.clone()], 1, true, &solver).unwrap();
        assert_eq!(sel.chosen, vec![tri]);
        assert!(sel.losses[0] < 1e-8);

        // K4 with F = b(012): brute force over the four triangles.
        let g = Arc::new(k4());
        let tris: Vec<CellBoundary> = [[0, 1, 2, 0], [0, 1, 3, 0], [0, 2, 3, 0], [1, 2, 3, 1]]
            .iter()
            .map(|w| validate_cycle(&g, w).unwrap())
            .collect();
        let f = flows_from(&[tris[0].to_dense(6)]);
        let empty = CellComplex::empty(g);
        let oracle: Vec<f64> = tris
            .iter()
            .map(|t| {
                let b = DVector::from_vec(t.to_dense(6));
                let y = f.matrix().column(0);
                (y - &b * (b.dot(&y) / b.dot(&b))).norm()
            })
            .collect();
        let sel = evaluate_and_select(&empty, &f, &tris, 1, true, &solver).unwrap();
        assert_eq!(sel.chosen, vec![tris[0].clone()]);
        assert_eq!(sel.stats.calls, 4);
        for (got, want) in sel.losses.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-8);
        }

        let sel = evaluate_and_select(&empty, &f, &tris[..2], 2, false, &solver).unwrap();
        assert_eq!(sel.chosen.len(), 2);
        assert_eq!(sel.stats.calls, 0);
    }

    #[test]
    fn infer_on_triangle() {
        let g = Arc::new(t3());
        let f = flows_from(&[vec![1., 1., -1.]]);
        let cfg = InferenceConfig::best_of(1, 1, 1);
        let out = infer_mfci(g, &f, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.complex.cell_count(), 1);
        assert_eq!(out.trace.records.len(), 2);
        assert!(out.trace.final_loss().unwrap() <= 1e-8);
    }

    #[test]
    fn infer_on_k4_with_two_triangle_flows() {
        let g = Arc::new(k4());
        let b012 = validate_cycle(&g, &[0, 1, 2, 0]).unwrap().to_dense(6);
        let b013 = validate_cycle(&g, &[0, 1, 3, 0]).unwrap().to_dense(6);
        let cols: Vec<Vec<f64>> = [(1.0, 0.5), (-0.3, 1.0), (0.8, -1.1)]
            .iter()
            .map(|&(x, y)| (0..6).map(|e| x * b012[e] + y * b013[e]).collect())
            .collect();
        let cfg = InferenceConfig::best_of(2, 1, 2);
        let out = infer_mfci(g, &flows_from(&cols), &cfg, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(out.trace.final_loss().unwrap() <= 1e-6);
        assert!(out.trace.is_non_increasing(1e-8));
    }

    #[test]
    fn approximate_without_evaluation_makes_one_solver_call() {
        let g = Arc::new(bridged_triangles());
        let t1 = validate_cycle(&g, &[0, 1, 2, 0]).unwrap().to_dense(8);
        let t2 = validate_cycle(&g, &[4, 5, 6, 4]).unwrap().to_dense(8);
        let cols: Vec<Vec<f64>> = [(1.0, 0.5), (-0.3, 1.0), (0.8, -1.1)]
            .iter()
            .map(|&(x, y)| (0..8).map(|e| x * t1[e] + y * t2[e]).collect())
            .collect();
        let mut cfg = InferenceConfig::all_of(2, 2);
        cfg.projection = ProjectionMode::Approximate;
        let out = infer_mfci(g, &flows_from(&cols), &cfg, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let last = out.trace.records.last().unwrap();
        assert_eq!(last.cumulative_solver_calls, 1);
        assert!(last.loss <= 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut cfg = InferenceConfig::best_of(4, 2, 1);
        assert!(cfg.validate(10, 10).is_err());
        cfg = InferenceConfig::best_of(4, 1, 8);
        assert!(cfg.validate(10, 4).is_err());
        assert!(cfg.validate(10, 8).is_ok());
        cfg.rank = Some(4);
        assert!(cfg.validate(10, 8).is_err());
        cfg = InferenceConfig::best_of(0, 1, 1);
        assert!(cfg.validate(10, 8).is_err());
        let mut forced = InferenceConfig::all_of(4, 4);
        forced.added_per_iteration = 1;
        assert!(forced.evaluates());
    }

    #[test]
    fn single_planted_cycle_is_recovered_by_every_variant() {
        let g = Arc::new(bridged_triangles());
        let t2 = validate_cycle(&g, &[4, 5, 6, 4]).unwrap().to_dense(8);
        let cols: Vec<Vec<f64>> = [1.0, -0.4, 2.5, 0.9]
            .iter()
            .map(|&x| t2.iter().map(|v| v * x).collect())
            .collect();
        let f = flows_from(&cols);
        for method in [FactorizationMethod::Svd, FactorizationMethod::Ica] {
            for discretization in [Discretization::Deterministic, Discretization::RandomWalk] {
                let mut cfg = InferenceConfig::best_of(1, 1, 1);
                cfg.method = method;
                cfg.discretization = discretization;
                let out =
                    infer_mfci(g.clone(), &f, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
                assert!(
                    out.trace.final_loss().unwrap() <= 1e-6,
                    "{method} {discretization}"
                );
            }
        }
    }
}
