//! Hodge projections of edge flows.
//!
//! Projections onto `Im B₁ᵀ` (gradient) and `Im B₂` (curl) are computed with
//! one sparse least-squares solve each; the Hodge Laplacian is never formed.
//! For a gradient-free flow the harmonic part is the curl residual.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CscMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::complex::{build_incidence, CellBoundary, CellComplex, OrientedGraph};
use crate::factorize::Factorization;
use crate::lsmr::lsmr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HodgeError {
    #[error("{what}: expected {expected} rows, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("flow matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Dense `edges × samples` matrix of edge flows; column `i` is one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix(DMatrix<f64>);

impl FlowMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, HodgeError> {
        if let Some(idx) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(HodgeError::NonFinite {
                row: idx % matrix.nrows(),
                col: idx / matrix.nrows(),
            });
        }
        Ok(Self(matrix))
    }

    pub fn zeros(edges: usize, samples: usize) -> Self {
        Self(DMatrix::zeros(edges, samples))
    }

    pub fn edge_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn sample_count(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    fn check_edges(&self, expected: usize) -> Result<(), HodgeError> {
        if self.edge_count() != expected {
            return Err(HodgeError::DimensionMismatch {
                what: "flow matrix",
                expected,
                actual: self.edge_count(),
            });
        }
        Ok(())
    }
}

impl From<DVector<f64>> for FlowMatrix {
    fn from(v: DVector<f64>) -> Self {
        let n = v.len();
        Self(v.reshape_generic(nalgebra::Dyn(n), nalgebra::Dyn(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative tolerance on the normal-equation residual `‖Aᵀ(Ax − y)‖ / ‖Aᵀy‖`.
    pub residual_tolerance: f64,
    /// Iteration cap per right-hand side; `None` means `10 · (rows + cols)`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tolerance: 1e-8,
            max_iterations: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), HodgeError> {
        if !(self.residual_tolerance > 0.0) {
            return Err(HodgeError::InvalidConfig(
                "residual_tolerance must be positive".into(),
            ));
        }
        if self.max_iterations == Some(0) {
            return Err(HodgeError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn iteration_cap(&self, a: &CscMatrix<f64>) -> usize {
        self.max_iterations
            .unwrap_or(10 * (a.nrows() + a.ncols()))
            .max(1)
    }
}

/// Accounting for iterative solver use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStats {
    /// Number of least-squares invocations (one per right-hand-side matrix).
    pub calls: usize,
    /// LSMR iterations summed over all columns.
    pub iterations: usize,
    /// `false` if any column hit the iteration cap.
    pub converged: bool,
}

impl Default for SolveStats {
    fn default() -> Self {
        Self {
            calls: 0,
            iterations: 0,
            converged: true,
        }
    }
}

impl AddAssign for SolveStats {
    fn add_assign(&mut self, rhs: Self) {
        self.calls += rhs.calls;
        self.iterations += rhs.iterations;
        self.converged &= rhs.converged;
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: DMatrix<f64>,
    pub stats: SolveStats,
}

/// Column-wise minimum-norm least-squares solution of `A X ≈ Y`.
///
/// Columns are solved independently (and in parallel); a column that hits
/// the iteration cap keeps its best iterate and clears `stats.converged`.
pub fn least_squares(
    a: &CscMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<LeastSquares, HodgeError> {
    cfg.validate()?;
    if y.nrows() != a.nrows() {
        return Err(HodgeError::DimensionMismatch {
            what: "right-hand side",
            expected: a.nrows(),
            actual: y.nrows(),
        });
    }
    let cap = cfg.iteration_cap(a);
    let columns: Vec<_> = (0..y.ncols())
        .into_par_iter()
        .map(|j| lsmr(a, y.column(j).as_slice(), cfg.residual_tolerance, cap))
        .collect();
    let mut solution = DMatrix::zeros(a.ncols(), y.ncols());
    let mut stats = SolveStats {
        calls: 1,
        ..SolveStats::default()
    };
    for (j, out) in columns.into_iter().enumerate() {
        solution.column_mut(j).copy_from_slice(&out.x);
        stats.iterations += out.iterations;
        stats.converged &= out.converged;
    }
    Ok(LeastSquares { solution, stats })
}

pub(crate) fn sparse_times_dense(a: &CscMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), x.ncols());
    for (j, col) in a.col_iter().enumerate() {
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            for s in 0..x.ncols() {
                out[(i, s)] += v * x[(j, s)];
            }
        }
    }
    out
}

/// `A · LS(A, Y)`: the orthogonal projection of `Y` onto `Im A`.
fn project_onto_range(
    a: &CscMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<(DMatrix<f64>, SolveStats), HodgeError> {
    let ls = least_squares(a, y, cfg)?;
    Ok((sparse_times_dense(a, &ls.solution), ls.stats))
}

/// Subtracts the gradient component `B₁ᵀ (B₁ᵀ)† F`.
pub fn remove_gradient(
    graph: &OrientedGraph,
    flows: &FlowMatrix,
    cfg: &SolverConfig,
) -> Result<(FlowMatrix, SolveStats), HodgeError> {
    flows.check_edges(graph.edge_count())?;
    let b1t = build_incidence(graph).matrix().transpose();
    let (gradient, stats) = project_onto_range(&b1t, flows.matrix(), cfg)?;
    Ok((FlowMatrix(flows.matrix() - gradient), stats))
}

/// Harmonic part of a gradient-free flow: `F − B₂ B₂† F`. Returns `F`
/// unchanged, without a solve, for a complex with no cells.
pub fn harmonic_projection(
    complex: &CellComplex,
    flows: &FlowMatrix,
    cfg: &SolverConfig,
) -> Result<(FlowMatrix, SolveStats), HodgeError> {
    flows.check_edges(complex.graph().edge_count())?;
    if complex.cell_count() == 0 {
        return Ok((flows.clone(), SolveStats::default()));
    }
    let (curl, stats) = project_onto_range(&complex.boundary_matrix(), flows.matrix(), cfg)?;
    Ok((FlowMatrix(flows.matrix() - curl), stats))
}

/// Frobenius norm of the harmonic projection.
pub fn loss(
    complex: &CellComplex,
    flows: &FlowMatrix,
    cfg: &SolverConfig,
) -> Result<(f64, SolveStats), HodgeError> {
    let (h, stats) = harmonic_projection(complex, flows, cfg)?;
    Ok((h.frobenius_norm(), stats))
}

/// Gradient, curl and harmonic components of an arbitrary flow.
#[derive(Debug, Clone)]
pub struct HodgeComponents {
    pub gradient: FlowMatrix,
    pub curl: FlowMatrix,
    pub harmonic: FlowMatrix,
    pub stats: SolveStats,
}

/// Full decomposition. The curl part is projected from the raw flow and the
/// harmonic part from the gradient-free flow, so recomposition is a genuine
/// consistency check rather than an identity.
pub fn decompose(
    complex: &CellComplex,
    flows: &FlowMatrix,
    cfg: &SolverConfig,
) -> Result<HodgeComponents, HodgeError> {
    let graph = complex.graph();
    flows.check_edges(graph.edge_count())?;
    let (gradient_free, mut stats) = remove_gradient(graph, flows, cfg)?;
    let gradient = FlowMatrix(flows.matrix() - gradient_free.matrix());
    let curl = if complex.cell_count() == 0 {
        FlowMatrix::zeros(flows.edge_count(), flows.sample_count())
    } else {
        let (curl, s) = project_onto_range(&complex.boundary_matrix(), flows.matrix(), cfg)?;
        stats += s;
        FlowMatrix(curl)
    };
    let (harmonic, s) = harmonic_projection(complex, &gradient_free, cfg)?;
    stats += s;
    Ok(HodgeComponents {
        gradient,
        curl,
        harmonic,
        stats,
    })
}

/// Result of [`approx_harmonic_update`].
#[derive(Debug, Clone)]
pub struct ApproxUpdate {
    pub flows: FlowMatrix,
    /// Positions in `chosen` that were linearly dependent on earlier ones and
    /// left out of the projector.
    pub dependent: Vec<usize>,
}

impl ApproxUpdate {
    pub fn degenerate_span(&self) -> bool {
        !self.dependent.is_empty()
    }
}

/// Orthonormal basis of the span of `vectors` by twice-iterated Gram-Schmidt.
/// Returns the basis and the indices of vectors dropped as dependent.
fn orthonormal_basis(vectors: Vec<DVector<f64>>) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    let mut dependent = Vec::new();
    for (idx, v) in vectors.into_iter().enumerate() {
        let original = v.norm();
        let mut w = v;
        for _ in 0..2 {
            for q in &basis {
                let coef = q.dot(&w);
                w.axpy(-coef, q, 1.0);
            }
        }
        let remaining = w.norm();
        if original == 0.0 || remaining <= 1e-10 * original {
            dependent.push(idx);
        } else {
            basis.push(w / remaining);
        }
    }
    (basis, dependent)
}

/// Approximate harmonic update `H − P (B C)`, with `P` the orthogonal
/// projector onto the span of the chosen boundaries. Uses a small dense
/// solve only; no iterative solver is invoked.
pub fn approx_harmonic_update(
    previous: &FlowMatrix,
    chosen: &[CellBoundary],
    fact: &Factorization,
) -> Result<ApproxUpdate, HodgeError> {
    let m = previous.edge_count();
    if fact.b().nrows() != m {
        return Err(HodgeError::DimensionMismatch {
            what: "factorization",
            expected: m,
            actual: fact.b().nrows(),
        });
    }
    if fact.c().ncols() != previous.sample_count() {
        return Err(HodgeError::DimensionMismatch {
            what: "factorization samples",
            expected: previous.sample_count(),
            actual: fact.c().ncols(),
        });
    }
    if let Some(&(e, _)) = chosen
        .iter()
        .flat_map(|c| c.entries().iter())
        .find(|&&(e, _)| e >= m)
    {
        return Err(HodgeError::DimensionMismatch {
            what: "boundary edge id",
            expected: m,
            actual: e + 1,
        });
    }
    let vectors = chosen
        .iter()
        .map(|c| DVector::from_vec(c.to_dense(m)))
        .collect();
    let (basis, dependent) = orthonormal_basis(vectors);
    let approx = fact.reconstruct();
    let mut updated = previous.matrix().clone();
    for q in &basis {
        // updated -= q (qᵀ B C)
        let coefs = q.transpose() * &approx;
        updated.ger(-1.0, q, &coefs.transpose(), 1.0);
    }
    Ok(ApproxUpdate {
        flows: FlowMatrix(updated),
        dependent,
    })
}
