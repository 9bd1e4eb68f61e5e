//! Small dense linear-algebra helpers shared by the solver, calibration and certification code.

use nalgebra::{DMatrix, DVector};

const POWER_MAX_ITER: usize = 200;
const POWER_REL_TOL: f64 = 1e-10;

/// Largest eigenvalue of `A^T A` (i.e. `||A||_2^2`) by power iteration.
///
/// Runs at most 200 iterations and stops once the Rayleigh quotient changes by less than
/// `1e-10` relative.
pub fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Deterministic start with no exact symmetry, so it is not orthogonal to the top singular
    // vector for structured matrices.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i as f64) * 0.7548776662).sin());
    let nv = v.norm();
    v /= nv;
    let mut prev = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let av = a * &v;
        let w = a.transpose() * &av;
        let rayleigh = av.norm_squared();
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        if (rayleigh - prev).abs() <= POWER_REL_TOL * rayleigh.abs() {
            // One more quotient with the updated vector; it can only move upwards.
            let last = (a * &v).norm_squared();
            return last.max(rayleigh);
        }
        prev = rayleigh;
    }
    (a * &v).norm_squared().max(prev)
}

/// Squared Euclidean norm of every column.
pub fn column_norms_sq(a: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter().map(|c| c.norm_squared()).collect()
}

/// Columns of `a` listed in `support`, in order.
pub fn select_columns(a: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), support.len(), |i, j| a[(i, support[j])])
}

/// Numerical rank: singular values above `1e-10 * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * smax).count()
}

/// Solves a symmetric positive (semi)definite system, falling back to the SVD
/// pseudo-inverse when Cholesky fails.
pub fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        let sol = chol.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Some(sol);
        }
    }
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let sol = svd.solve(rhs, 1e-12 * smax.max(f64::MIN_POSITIVE)).ok()?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}
