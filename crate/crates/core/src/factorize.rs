//! Low-rank factorizations `H ≈ B · C` of harmonic flow matrices and the
//! per-column scoring used to pick cell candidates from `B`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::hodge::FlowMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorizeError {
    #[error("rank {rank} is outside 1..={max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("input is numerically zero (Frobenius norm {norm:e})")]
    DegenerateInput { norm: f64 },
    #[error("ICA needs at least 2 samples, got {samples}")]
    TooFewSamples { samples: usize },
    #[error("factor shapes do not agree: B is {b_rows}x{b_cols}, C is {c_rows}x{c_cols}")]
    ShapeMismatch {
        b_rows: usize,
        b_cols: usize,
        c_rows: usize,
        c_cols: usize,
    },
    #[error("column {column} of B is zero")]
    ZeroColumn { column: usize },
    #[error("factor contains a non-finite entry")]
    NonFinite,
    #[error("invalid ICA configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorizationMethod {
    Svd,
    Ica,
}

impl std::fmt::Display for FactorizationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Svd => "svd",
            Self::Ica => "ica",
        })
    }
}

impl std::str::FromStr for FactorizationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "svd" => Ok(Self::Svd),
            "ica" => Ok(Self::Ica),
            other => Err(format!("unknown factorization method `{other}` (svd|ica)")),
        }
    }
}

/// A rank-`r` factorization `B · C` with `B: m × r` and `C: r × s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    method: FactorizationMethod,
    converged: bool,
}

impl Factorization {
    pub fn new(
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        method: FactorizationMethod,
    ) -> Result<Self, FactorizeError> {
        if b.ncols() != c.nrows() || b.ncols() == 0 {
            return Err(FactorizeError::ShapeMismatch {
                b_rows: b.nrows(),
                b_cols: b.ncols(),
                c_rows: c.nrows(),
                c_cols: c.ncols(),
            });
        }
        if b.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(FactorizeError::NonFinite);
        }
        if let Some(column) = b.column_iter().position(|col| col.iter().all(|&v| v == 0.0)) {
            return Err(FactorizeError::ZeroColumn { column });
        }
        Ok(Self {
            b,
            c,
            method,
            converged: true,
        })
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn rank(&self) -> usize {
        self.b.ncols()
    }

    pub fn method(&self) -> FactorizationMethod {
        self.method
    }

    /// `false` if an ICA component hit its iteration budget.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.b * &self.c
    }

    /// Reorders components; `order[i]` is the old index of new column `i`.
    fn permuted(&self, order: &[usize]) -> Self {
        let b = DMatrix::from_columns(&order.iter().map(|&j| self.b.column(j)).collect::<Vec<_>>());
        let c = DMatrix::from_rows(&order.iter().map(|&j| self.c.row(j)).collect::<Vec<_>>());
        Self { b, c, ..*self }
    }
}

fn check_rank(h: &FlowMatrix, rank: usize) -> Result<(), FactorizeError> {
    let max = h.edge_count().min(h.sample_count());
    if rank == 0 || rank > max {
        return Err(FactorizeError::RankTooLarge { rank, max });
    }
    Ok(())
}

fn check_nonzero(h: &FlowMatrix) -> Result<(), FactorizeError> {
    let norm = h.frobenius_norm();
    let floor = 1e-12 * ((h.edge_count() * h.sample_count()) as f64).sqrt();
    if norm < floor {
        return Err(FactorizeError::DegenerateInput { norm });
    }
    Ok(())
}

/// Thin SVD with singular values sorted descending.
struct SortedSvd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v_t: DMatrix<f64>,
}

fn sorted_svd(h: &DMatrix<f64>) -> SortedSvd {
    let a = faer::Mat::<f64>::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)]);
    let svd = a.thin_svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    SortedSvd {
        u: DMatrix::from_fn(h.nrows(), k, |i, j| u[(i, order[j])]),
        sigma: order.iter().map(|&j| s[j]).collect(),
        v_t: DMatrix::from_fn(k, h.ncols(), |i, j| v[(j, order[i])]),
    }
}

/// Flips each component so the largest-magnitude entry of its `B` column is
/// positive (first such entry on ties).
fn fix_signs(b: &mut DMatrix<f64>, c: &mut DMatrix<f64>) {
    for j in 0..b.ncols() {
        let mut best = 0;
        for i in 1..b.nrows() {
            if b[(i, j)].abs() > b[(best, j)].abs() {
                best = i;
            }
        }
        if b[(best, j)] < 0.0 {
            b.column_mut(j).neg_mut();
            c.row_mut(j).neg_mut();
        }
    }
}

/// Rank-`rank` truncated SVD with `B = U_r` (unit columns) and `C = Σ_r V_rᵀ`.
pub fn truncated_svd(h: &FlowMatrix, rank: usize) -> Result<Factorization, FactorizeError> {
    check_rank(h, rank)?;
    check_nonzero(h)?;
    let svd = sorted_svd(h.matrix());
    let mut b = svd.u.columns(0, rank).into_owned();
    let mut c = svd.v_t.rows(0, rank).into_owned();
    for (j, sigma) in svd.sigma.iter().take(rank).enumerate() {
        c.row_mut(j).scale_mut(*sigma);
    }
    fix_signs(&mut b, &mut c);
    Factorization::new(b, c, FactorizationMethod::Svd)
}

/// Frobenius norm of the best rank-`rank` approximation error, i.e. the norm
/// of the discarded singular values.
pub fn svd_tail_norm(h: &FlowMatrix, rank: usize) -> f64 {
    let svd = sorted_svd(h.matrix());
    svd.sigma
        .iter()
        .skip(rank)
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaConfig {
    pub max_iterations: usize,
    /// Convergence threshold on `1 − |⟨w_new, w_old⟩|` per component.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

/// Relative singular-value floor below which a direction is not whitened.
const WHITENING_FLOOR: f64 = 1e-10;

/// FastICA with the log-cosh contrast and deflation.
///
/// Rows of `H` are treated as mixed signals over the `s` samples: `H ≈ B C`
/// with `B` the mixing matrix and the rows of `C` the independent sources.
/// Whitening uses the SVD of `H` itself (no centering), so `B C` reproduces
/// the rank-`r` SVD approximation exactly. Directions whose singular value is
/// below `1e-10 · σ₁` are not whitened; the returned rank can then be lower
/// than requested. Components come back sorted by ascending [`column_scores`].
pub fn fast_ica(h: &FlowMatrix, rank: usize, cfg: &IcaConfig) -> Result<Factorization, FactorizeError> {
    let samples = h.sample_count();
    if samples < 2 {
        return Err(FactorizeError::TooFewSamples { samples });
    }
    check_rank(h, rank)?;
    check_nonzero(h)?;
    if !(cfg.tolerance > 0.0) {
        return Err(FactorizeError::InvalidConfig("tolerance must be positive"));
    }
    if cfg.max_iterations == 0 {
        return Err(FactorizeError::InvalidConfig("max_iterations must be at least 1"));
    }

    let svd = sorted_svd(h.matrix());
    let top = svd.sigma[0];
    let rank = svd
        .sigma
        .iter()
        .take(rank)
        .take_while(|&&s| s > WHITENING_FLOOR * top)
        .count();
    let root_s = (samples as f64).sqrt();
    // Whitened signals: rows have unit mean square and are mutually orthogonal.
    let z = svd.v_t.rows(0, rank) * root_s;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = DMatrix::<f64>::zeros(rank, rank);
    let mut converged = true;
    for p in 0..rank {
        let mut wp = DVector::from_fn(rank, |_, _| StandardNormal.sample(&mut rng));
        orthogonalize(&mut wp, &w, p);
        let mut done = false;
        for _ in 0..cfg.max_iterations {
            let proj = wp.transpose() * &z;
            let g = proj.map(f64::tanh);
            let g_prime_mean = g.iter().map(|t| 1.0 - t * t).sum::<f64>() / samples as f64;
            let mut next = (&z * g.transpose()) / samples as f64 - &wp * g_prime_mean;
            orthogonalize(&mut next, &w, p);
            let change = (1.0 - next.dot(&wp).abs()).abs();
            wp = next;
            if change < cfg.tolerance {
                done = true;
                break;
            }
        }
        converged &= done;
        w.row_mut(p).copy_from(&wp.transpose());
    }

    let mut c = &w * &z;
    let mut scaled_u = svd.u.columns(0, rank).into_owned();
    for (j, sigma) in svd.sigma.iter().take(rank).enumerate() {
        scaled_u.column_mut(j).scale_mut(sigma / root_s);
    }
    let mut b = scaled_u * w.transpose();
    fix_signs(&mut b, &mut c);
    let mut fact = Factorization::new(b, c, FactorizationMethod::Ica)?;
    fact.converged = converged;

    let scores = column_scores(h, &fact);
    let order = ascending_order(&scores);
    Ok(fact.permuted(&order))
}

/// Removes the components along the first `filled` rows of `basis`, then
/// normalizes.
fn orthogonalize(v: &mut DVector<f64>, basis: &DMatrix<f64>, filled: usize) {
    for q in 0..filled {
        let row = basis.row(q).transpose();
        let coef = row.dot(v);
        v.axpy(-coef, &row, 1.0);
    }
    let norm = v.norm();
    if norm > 0.0 {
        *v /= norm;
    }
}

/// `score_j = ‖H − B[:, j] C[j, :]‖₁` (entrywise absolute sum).
pub fn column_scores(h: &FlowMatrix, fact: &Factorization) -> Vec<f64> {
    let hm = h.matrix();
    (0..fact.rank())
        .map(|j| {
            let bj = fact.b().column(j);
            let cj = fact.c().row(j);
            let mut total = 0.0;
            for s in 0..hm.ncols() {
                for e in 0..hm.nrows() {
                    total += (hm[(e, s)] - bj[e] * cj[s]).abs();
                }
            }
            total
        })
        .collect()
}

fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// A column of `B` picked for discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredColumn {
    pub index: usize,
    pub score: f64,
    pub values: Vec<f64>,
}

/// The `count` columns with the lowest scores, ascending; ties keep the
/// lower column index first. `count` is clamped to the rank.
pub fn select_columns(fact: &Factorization, scores: &[f64], count: usize) -> Vec<ScoredColumn> {
    ascending_order(scores)
        .into_iter()
        .take(count)
        .map(|index| ScoredColumn {
            index,
            score: scores[index],
            values: fact.b().column(index).iter().copied().collect(),
        })
        .collect()
}
