//! LSMR for sparse least squares `min ‖A x − b‖₂` without damping.
//!
//! Started from `x = 0`, the iterates converge to the minimum-norm solution,
//! which is what the rank-deficient systems built from incidence and boundary
//! matrices need. The stopping rule is `‖Aᵀ r‖ ≤ tol · ‖Aᵀ b‖`, using the
//! running estimate of `‖Aᵀ r‖` that LSMR maintains for free. The threshold
//! never drops below the roundoff level `64 ε ‖A‖_F ‖b‖`; without that floor a
//! right-hand side numerically orthogonal to the range would never converge.

use nalgebra_sparse::CscMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LsmrOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `y ← A x`
fn mul(a: &CscMatrix<f64>, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (j, col) in a.col_iter().enumerate() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            y[i] += v * xj;
        }
    }
}

/// `y ← Aᵀ x`
fn mul_transpose(a: &CscMatrix<f64>, x: &[f64], y: &mut [f64]) {
    for (j, col) in a.col_iter().enumerate() {
        y[j] = col
            .row_indices()
            .iter()
            .zip(col.values())
            .map(|(&i, &v)| v * x[i])
            .sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scale(v: &mut [f64], factor: f64) {
    v.iter_mut().for_each(|x| *x *= factor);
}

const ROUNDOFF_FLOOR: f64 = 64.0;

pub fn lsmr(a: &CscMatrix<f64>, b: &[f64], tolerance: f64, max_iterations: usize) -> LsmrOutcome {
    let (m, n) = (a.nrows(), a.ncols());
    assert_eq!(b.len(), m, "right-hand side length must match the row count");
    let mut x = vec![0.0; n];

    let mut u = b.to_vec();
    let mut beta = norm(&u);
    if beta > 0.0 {
        scale(&mut u, 1.0 / beta);
    }
    let mut v = vec![0.0; n];
    mul_transpose(a, &u, &mut v);
    let mut alpha = norm(&v);
    if alpha > 0.0 {
        scale(&mut v, 1.0 / alpha);
    }
    let normar0 = alpha * beta;
    let norm_a = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = (tolerance * normar0).max(ROUNDOFF_FLOOR * f64::EPSILON * norm_a * beta);
    if normar0 <= threshold {
        return LsmrOutcome {
            x,
            iterations: 0,
            converged: true,
        };
    }

    let mut zetabar = alpha * beta;
    let mut alphabar = alpha;
    let mut rho = 1.0;
    let mut rhobar = 1.0;
    let mut cbar = 1.0;
    let mut sbar = 0.0;
    let mut h = v.clone();
    let mut hbar = vec![0.0; n];
    let mut au = vec![0.0; m];
    let mut atu = vec![0.0; n];

    for iteration in 1..=max_iterations {
        // Golub-Kahan bidiagonalization step.
        mul(a, &v, &mut au);
        for (ui, avi) in u.iter_mut().zip(&au) {
            *ui = avi - alpha * *ui;
        }
        beta = norm(&u);
        if beta > 0.0 {
            scale(&mut u, 1.0 / beta);
            mul_transpose(a, &u, &mut atu);
            for (vi, ati) in v.iter_mut().zip(&atu) {
                *vi = ati - beta * *vi;
            }
            alpha = norm(&v);
            if alpha > 0.0 {
                scale(&mut v, 1.0 / alpha);
            }
        }

        // Rotation eliminating beta.
        let rhoold = rho;
        rho = alphabar.hypot(beta);
        let c = alphabar / rho;
        let s = beta / rho;
        let thetanew = s * alpha;
        alphabar = c * alpha;

        // Rotation eliminating thetanew.
        let rhobarold = rhobar;
        let thetabar = sbar * rho;
        let rhotemp = cbar * rho;
        rhobar = rhotemp.hypot(thetanew);
        cbar = rhotemp / rhobar;
        sbar = thetanew / rhobar;
        let zeta = cbar * zetabar;
        zetabar *= -sbar;

        let hbar_factor = thetabar * rho / (rhoold * rhobarold);
        let x_factor = zeta / (rho * rhobar);
        let h_factor = thetanew / rho;
        for k in 0..n {
            hbar[k] = h[k] - hbar_factor * hbar[k];
            x[k] += x_factor * hbar[k];
            h[k] = v[k] - h_factor * h[k];
        }

        let normar = zetabar.abs();
        if normar <= threshold || !normar.is_finite() || rhobar == 0.0 {
            return LsmrOutcome {
                x,
                iterations: iteration,
                converged: normar.is_finite(),
            };
        }
    }
    LsmrOutcome {
        x,
        iterations: max_iterations,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use nalgebra_sparse::CooMatrix;

    fn sparse(dense: &DMatrix<f64>) -> CscMatrix<f64> {
        let mut coo = CooMatrix::new(dense.nrows(), dense.ncols());
        for j in 0..dense.ncols() {
            for i in 0..dense.nrows() {
                if dense[(i, j)] != 0.0 {
                    coo.push(i, j, dense[(i, j)]);
                }
            }
        }
        CscMatrix::from(&coo)
    }

    #[test]
    fn solves_overdetermined_full_rank_system() {
        let a = DMatrix::from_row_slice(4, 2, &[1., 0., 1., 1., 0., 2., 3., -1.]);
        let b = DVector::from_vec(vec![1., 2., 0., 4.]);
        let out = lsmr(&sparse(&a), b.as_slice(), 1e-12, 100);
        assert!(out.converged);
        // Normal-equation oracle.
        let expected = (a.transpose() * &a)
            .try_inverse()
            .unwrap()
            * a.transpose()
            * &b;
        for (x, e) in out.x.iter().zip(expected.iter()) {
            assert!((x - e).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_system_gives_minimum_norm_solution() {
        // Two identical columns: the minimum-norm solution splits evenly.
        let a = DMatrix::from_row_slice(3, 2, &[1., 1., 1., 1., 0., 0.]);
        let out = lsmr(&sparse(&a), &[2., 2., 5.], 1e-12, 100);
        assert!((out.x[0] - 1.0).abs() < 1e-10);
        assert!((out.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_rhs_returns_zero_without_iterating() {
        let a = DMatrix::from_row_slice(2, 2, &[1., 0., 0., 1.]);
        let out = lsmr(&sparse(&a), &[0., 0.], 1e-8, 10);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0., 0.]);
    }

    #[test]
    fn reports_non_convergence() {
        let a = DMatrix::from_fn(20, 10, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let out = lsmr(&sparse(&a), &b, 1e-14, 1);
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn rhs_orthogonal_to_range_stops_immediately() {
        // Columns span e0 + e1 and e2; b is orthogonal up to roundoff.
        let a = DMatrix::from_row_slice(3, 2, &[0.1, 0., 0.1, 0., 0., 1.]);
        let b = [0.3, -0.3 + 1e-17, 0.];
        let out = lsmr(&sparse(&a), &b, 1e-8, 100);
        assert!(out.converged);
        assert!(out.x.iter().all(|v| v.abs() < 1e-12), "{:?}", out.x);
    }
}
