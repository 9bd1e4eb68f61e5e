//! Optimality certificates for `J_Ψ` and `J_0`, and exhaustive support enumeration.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generating::{CoordPenalty, Relaxation};
use crate::linalg;
use crate::problem::{Constraint, Problem};

/// Absolute slack for interval memberships and boundary detection.
pub const MEMBERSHIP_SLACK: f64 = 1e-8;
/// Default absolute tolerance on stationarity residuals.
pub const DEFAULT_TOL: f64 = 1e-6;

const MAX_ENUM_N: usize = 20;
const MAX_ENUM_SUPPORTS: u64 = 1_000_000;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_GRAD_TOL: f64 = 1e-12;
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertRecord {
    pub support: Vec<usize>,
    /// `None` when no relaxation was involved.
    pub is_critical_jpsi: Option<bool>,
    pub is_localmin_jpsi: Option<bool>,
    pub is_localmin_j0: bool,
    pub is_strict: bool,
    pub max_residual: f64,
    /// Nonzero coordinates inside `[α⁻, α⁺]`.
    pub interval_violations: Vec<usize>,
    /// Nonzero coordinates within `MEMBERSHIP_SLACK` of `α⁻` or `α⁺`.
    pub boundary_hits: Vec<usize>,
    /// Whether every curvature meets its threshold; `None` without a relaxation.
    pub exact_relaxation: Option<bool>,
}

pub fn support(x: &DVector<f64>) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

fn check_dims(problem: &Problem, relax: Option<&Relaxation>, x: &DVector<f64>) -> Result<()> {
    problem.check_feasible(x)?;
    if let Some(r) = relax {
        if r.len() != problem.n() {
            return Err(Error::Dimension(format!(
                "relaxation has {} coordinates, problem has {}",
                r.len(),
                problem.n()
            )));
        }
    }
    Ok(())
}

/// Per-coordinate residuals of the critical-point system of `J_Ψ`.
fn jpsi_residuals(problem: &Problem, relax: &Relaxation, x: &DVector<f64>) -> Result<Vec<f64>> {
    let (g, _) = problem.fidelity.grad_f(&problem.a, x)?;
    let l2 = problem.lambda2;
    Ok((0..problem.n())
        .map(|n| {
            let xn = x[n];
            let gn = g[n];
            match &relax.coords[n] {
                CoordPenalty::Brex(gen) => {
                    let (am, ap) = gen.alpha_bounds();
                    if xn == 0.0 {
                        gen.ell_violation(-gn)
                    } else if xn >= am && xn < 0.0 {
                        (gn + l2 * xn - gen.psi_d1_raw(xn) + gen.psi_d1_raw(am)).abs()
                    } else if xn > 0.0 && xn <= ap {
                        (gn + l2 * xn - gen.psi_d1_raw(xn) + gen.psi_d1_raw(ap)).abs()
                    } else {
                        (gn + l2 * xn).abs()
                    }
                }
                CoordPenalty::L0 => {
                    if xn == 0.0 {
                        0.0
                    } else {
                        (gn + l2 * xn).abs()
                    }
                }
            }
        })
        .collect())
}

/// Critical-point test for `J_Ψ`; returns the verdict and the largest residual.
pub fn check_critical_jpsi(problem: &Problem, relax: &Relaxation, x: &DVector<f64>, tol: f64) -> Result<(bool, f64)> {
    check_dims(problem, Some(relax), x)?;
    let res = jpsi_residuals(problem, relax, x)?;
    let max = res.iter().cloned().fold(0.0, f64::max);
    Ok((max <= tol, max))
}

/// Largest restricted stationarity residual `|<a_n, ∇F> + λ2 x_n|` over the support.
pub fn j0_residual(problem: &Problem, x: &DVector<f64>) -> Result<f64> {
    check_dims(problem, None, x)?;
    let (g, _) = problem.fidelity.grad_f(&problem.a, x)?;
    Ok(support(x)
        .into_iter()
        .map(|n| (g[n] + problem.lambda2 * x[n]).abs())
        .fold(0.0, f64::max))
}

/// Local minimality for `J_0`: stationarity of the problem restricted to the support.
pub fn check_localmin_j0(problem: &Problem, x: &DVector<f64>, tol: f64) -> Result<bool> {
    Ok(j0_residual(problem, x)? <= tol)
}

/// Strictness: `λ2 > 0` or `A_σ` has full column rank.
pub fn is_strict(problem: &Problem, supp: &[usize]) -> bool {
    problem.lambda2 > 0.0 || linalg::numerical_rank(&linalg::select_columns(&problem.a, supp)) == supp.len()
}

fn interval_flags(relax: &Relaxation, x: &DVector<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut inside = Vec::new();
    let mut hits = Vec::new();
    for (n, &xn) in x.iter().enumerate() {
        if xn == 0.0 {
            continue;
        }
        if let Some(g) = relax.generator(n) {
            let (am, ap) = g.alpha_bounds();
            if xn >= am && xn <= ap {
                inside.push(n);
            }
            if (xn - ap).abs() <= MEMBERSHIP_SLACK || (am < 0.0 && (xn - am).abs() <= MEMBERSHIP_SLACK) {
                hits.push(n);
            }
        }
    }
    (inside, hits)
}

/// Full certificate of `x` against `J_Ψ` and `J_0`.
pub fn check_localmin_jpsi(problem: &Problem, relax: &Relaxation, x: &DVector<f64>, tol: f64) -> Result<CertRecord> {
    let (critical, max_res) = check_critical_jpsi(problem, relax, x, tol)?;
    let (inside, hits) = interval_flags(relax, x);
    let supp = support(x);
    Ok(CertRecord {
        is_critical_jpsi: Some(critical),
        is_localmin_jpsi: Some(critical && inside.is_empty()),
        is_localmin_j0: check_localmin_j0(problem, x, tol)?,
        is_strict: is_strict(problem, &supp),
        max_residual: max_res,
        interval_violations: inside,
        boundary_hits: hits,
        exact_relaxation: Some(relax.is_exact()),
        support: supp,
    })
}

/// Certificate of `x` against `J_0` only.
pub fn certify_j0(problem: &Problem, x: &DVector<f64>, tol: f64) -> Result<CertRecord> {
    let res = j0_residual(problem, x)?;
    let supp = support(x);
    Ok(CertRecord {
        is_critical_jpsi: None,
        is_localmin_jpsi: None,
        is_localmin_j0: res <= tol,
        is_strict: is_strict(problem, &supp),
        max_residual: res,
        interval_violations: Vec::new(),
        boundary_hits: Vec::new(),
        exact_relaxation: None,
        support: supp,
    })
}

/// Whether a local minimizer of `J_0` is also a local minimizer of `J_Ψ`: every nonzero
/// coordinate lies strictly outside `[α⁻, α⁺]` and every zero coordinate has
/// `-<a_n, ∇F> ∈ [ℓ⁻, ℓ⁺]`.
pub fn check_preserved(problem: &Problem, relax: &Relaxation, x: &DVector<f64>) -> Result<bool> {
    check_dims(problem, Some(relax), x)?;
    let (g, _) = problem.fidelity.grad_f(&problem.a, x)?;
    for n in 0..problem.n() {
        let Some(gen) = relax.generator(n) else { continue };
        let xn = x[n];
        if xn != 0.0 {
            let (am, ap) = gen.alpha_bounds();
            if xn >= am && xn <= ap {
                return Ok(false);
            }
        } else if gen.ell_violation(-g[n]) > MEMBERSHIP_SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Zeroes every coordinate lying in the open set `(α⁻, α⁺) \ {0}`.
pub fn threshold_to_j0(relax: &Relaxation, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter().enumerate().map(|(n, &v)| match relax.generator(n) {
            Some(g) if g.in_open_interval(v) => 0.0,
            _ => v,
        }),
    )
}

/// A local minimizer of `J_0` found by support enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimizer {
    pub support: Vec<usize>,
    pub x: Vec<f64>,
    pub j0: f64,
    pub cert: CertRecord,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All local minimizers of `J_0` with at most `max_support` nonzeros, sorted by `J_0`.
///
/// Each support's restricted problem is strictly convex when it has a minimizer; least
/// squares uses a direct solve and the other data terms a damped Newton method. Supports
/// whose restricted problem has no interior solution are skipped.
pub fn enumerate_minimizers(problem: &Problem, max_support: usize) -> Result<Vec<Minimizer>> {
    let n = problem.n();
    if n > MAX_ENUM_N {
        return Err(Error::CombinatorialLimit(format!("enumeration needs N <= {MAX_ENUM_N}, got {n}")));
    }
    if max_support > n {
        return Err(Error::Invalid(format!("max_support {max_support} exceeds N = {n}")));
    }
    let total: u64 = (0..=max_support as u64).map(|k| binomial(n as u64, k)).sum();
    if total > MAX_ENUM_SUPPORTS {
        return Err(Error::CombinatorialLimit(format!(
            "{total} supports exceed the limit of {MAX_ENUM_SUPPORTS}"
        )));
    }
    let masks: Vec<u32> = (0..(1u32 << n)).filter(|m| m.count_ones() as usize <= max_support).collect();
    let found: Vec<Minimizer> = masks
        .par_iter()
        .filter_map(|&mask| {
            let supp: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let x = match restricted_solve(problem, &supp) {
                Ok(Some(x)) => x,
                Ok(None) => return None,
                Err(e) => {
                    log::warn!("support {supp:?} skipped: {e}");
                    return None;
                }
            };
            let j0 = problem.objective_j0(&x).ok()?;
            let cert = certify_j0(problem, &x, DEFAULT_TOL).ok()?;
            Some(Minimizer { support: supp, x: x.as_slice().to_vec(), j0, cert })
        })
        .collect();
    let mut out: Vec<Minimizer> = Vec::with_capacity(found.len());
    for m in found {
        let dup = out.iter().any(|o| {
            o.x.iter().zip(&m.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= DEDUP_TOL
        });
        if !dup {
            out.push(m);
        }
    }
    out.sort_by(|a, b| a.j0.total_cmp(&b.j0).then_with(|| a.support.cmp(&b.support)));
    Ok(out)
}

/// Minimizer of `F_y(A_σ v) + (λ2/2)||v||²` embedded in `R^N`, or `None` when it has a zero
/// or (on the nonnegative orthant) a negative entry.
pub fn restricted_solve(problem: &Problem, supp: &[usize]) -> Result<Option<DVector<f64>>> {
    let n = problem.n();
    if supp.is_empty() {
        return Ok(Some(DVector::zeros(n)));
    }
    let a_s = linalg::select_columns(&problem.a, supp);
    let v = match problem.fidelity.kind {
        crate::fidelity::FidelityKind::LeastSquares => {
            let y = DVector::from_column_slice(&problem.fidelity.y);
            let h = a_s.tr_mul(&a_s) + DMatrix::identity(supp.len(), supp.len()) * problem.lambda2;
            let rhs = a_s.tr_mul(&y);
            linalg::solve_spd(&h, &rhs)
                .ok_or_else(|| Error::Convergence(format!("singular restricted system on {supp:?}")))?
        }
        _ => damped_newton(problem, &a_s)?,
    };
    let scale = v.amax().max(1.0);
    if v.iter().any(|t| t.abs() <= 1e-12 * scale) {
        return Ok(None);
    }
    if problem.constraint == Constraint::Nonneg && v.iter().any(|t| *t <= 0.0) {
        return Ok(None);
    }
    let mut x = DVector::zeros(n);
    for (k, &i) in supp.iter().enumerate() {
        x[i] = v[k];
    }
    Ok(Some(x))
}

fn damped_newton(problem: &Problem, a_s: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = a_s.ncols();
    let l2 = problem.lambda2;
    let fid = &problem.fidelity;
    let objective = |v: &DVector<f64>| -> f64 {
        match fid.value(&(a_s * v)) {
            Ok(f) => f + 0.5 * l2 * v.norm_squared(),
            Err(_) => f64::INFINITY,
        }
    };
    let mut v = DVector::zeros(k);
    let mut val = objective(&v);
    for _ in 0..NEWTON_MAX_ITER {
        let z = a_s * &v;
        let gz = fid.gradient(&z)?;
        let grad = a_s.tr_mul(&gz) + &v * l2;
        if grad.amax() <= NEWTON_GRAD_TOL {
            return Ok(v);
        }
        let hz = fid.hessian_diag(&z)?;
        let weighted = DMatrix::from_fn(a_s.nrows(), k, |i, j| a_s[(i, j)] * hz[i]);
        let h = a_s.tr_mul(&weighted) + DMatrix::identity(k, k) * l2;
        let step = linalg::solve_spd(&h, &(-&grad))
            .ok_or_else(|| Error::Convergence("singular Newton system".into()))?;
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-20 {
            let cand = &v + &step * t;
            let cv = objective(&cand);
            if cv <= val + 1e-4 * t * slope {
                v = cand;
                val = cv;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No further decrease is representable; accept if the gradient is already tiny.
            if grad.amax() <= 1e-8 * val.abs().max(1.0) {
                return Ok(v);
            }
            return Err(Error::Convergence("Newton line search stalled".into()));
        }
        if (&step * t).amax() <= 1e-15 * v.amax().max(1.0) {
            return Ok(v);
        }
    }
    let z = a_s * &v;
    let grad = a_s.tr_mul(&fid.gradient(&z)?) + &v * l2;
    if grad.amax() <= 1e-8 * val.abs().max(1.0) {
        return Ok(v);
    }
    Err(Error::Convergence(format!(
        "restricted Newton did not converge in {NEWTON_MAX_ITER} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, CalibrationMode, PsiFamily};
    use crate::fidelity::Fidelity;

    fn ls_2d() -> Problem {
        Problem::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]),
            Fidelity::least_squares(vec![1.0, 2.0]).unwrap(),
            0.5,
            0.0,
            Constraint::Reals,
        )
        .unwrap()
    }

    fn relax5(p: &Problem) -> Relaxation {
        calibrate(p, PsiFamily::Power { p: 2.0 }, CalibrationMode::AtThreshold).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn ls_2d_enumeration() {
        let p = ls_2d();
        let mins = enumerate_minimizers(&p, 2).unwrap();
        let j: Vec<f64> = mins.iter().map(|m| m.j0).collect();
        let want = [0.55, 1.0, 1.75, 2.5];
        assert_eq!(j.len(), 4);
        for (a, b) in j.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{j:?}");
        }
        assert_eq!(mins[0].support, vec![1]);
        assert!((mins[0].x[1] - 0.7).abs() < 1e-12);
        assert!(mins.iter().any(|m| m.support.is_empty()));
        assert!(mins.iter().all(|m| m.cert.is_strict && m.cert.is_localmin_j0));
    }

    #[test]
    fn ls_2d_critical_point_and_localmin() {
        let p = ls_2d();
        let r = relax5(&p);
        let x = v(&[0.0, 0.7]);
        let (crit, res) = check_critical_jpsi(&p, &r, &x, DEFAULT_TOL).unwrap();
        assert!(crit, "residual {res}");
        let cert = check_localmin_jpsi(&p, &r, &x, DEFAULT_TOL).unwrap();
        assert_eq!(cert.is_localmin_jpsi, Some(true));
        assert!(cert.is_localmin_j0 && cert.is_strict);
        assert!(check_preserved(&p, &r, &x).unwrap());
    }

    #[test]
    fn zero_is_local_min_for_small_data() {
        let p = Problem::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]),
            Fidelity::least_squares(vec![0.01, 0.02]).unwrap(),
            0.5,
            0.0,
            Constraint::Reals,
        )
        .unwrap();
        let r = relax5(&p);
        let cert = check_localmin_jpsi(&p, &r, &DVector::zeros(2), DEFAULT_TOL).unwrap();
        assert_eq!(cert.is_localmin_jpsi, Some(true));
        assert!(cert.is_strict);
        assert!(check_localmin_j0(&p, &DVector::zeros(2), 0.0).unwrap());
    }

    #[test]
    fn point_on_alpha_boundary_is_rejected() {
        let p = ls_2d();
        let r = relax5(&p);
        let ap = r.generator(0).unwrap().alpha_bounds().1;
        let x = v(&[ap, 0.0]);
        let cert = check_localmin_jpsi(&p, &r, &x, DEFAULT_TOL).unwrap();
        assert_eq!(cert.is_localmin_jpsi, Some(false));
        assert_eq!(cert.boundary_hits, vec![0]);
    }

    #[test]
    fn two_sparse_minimizer_is_eliminated() {
        let p = ls_2d();
        let r = relax5(&p);
        let x = v(&[0.125, 0.625]);
        assert!(check_localmin_j0(&p, &x, 1e-12).unwrap());
        assert!(!check_localmin_j0(&p, &v(&[0.13, 0.625]), 1e-6).unwrap());
        assert!(!check_preserved(&p, &r, &x).unwrap());
    }

    #[test]
    fn thresholding_zeroes_interior_coordinates() {
        let p = ls_2d();
        let r = relax5(&p);
        let ap = r.generator(0).unwrap().alpha_bounds().1;
        assert_eq!(threshold_to_j0(&r, &v(&[ap, -ap])), v(&[ap, -ap]));
        assert_eq!(threshold_to_j0(&r, &v(&[0.1, 2.0])), v(&[0.0, 2.0]));
        assert_eq!(threshold_to_j0(&r, &v(&[0.4, -0.5])), v(&[0.4, -0.5]));
    }

    #[test]
    fn rank_deficient_support_is_not_strict() {
        let p = Problem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]),
            Fidelity::least_squares(vec![1.0, 1.0]).unwrap(),
            0.1,
            0.0,
            Constraint::Reals,
        )
        .unwrap();
        assert!(!is_strict(&p, &[0, 1]));
        assert!(is_strict(&p, &[0]));
    }

    #[test]
    fn kl_scalar_minimizers() {
        let p = Problem::new(
            DMatrix::from_element(1, 1, 1.0),
            Fidelity::kullback_leibler(vec![2.0], 0.1).unwrap(),
            0.05,
            0.0,
            Constraint::Nonneg,
        )
        .unwrap();
        let mins = enumerate_minimizers(&p, 1).unwrap();
        assert_eq!(mins.len(), 2);
        let nz = mins.iter().find(|m| !m.support.is_empty()).unwrap();
        assert!((nz.x[0] - 1.9).abs() < 1e-10);
    }

    #[test]
    fn combinatorial_guard() {
        let p = Problem::new(
            DMatrix::from_element(1, 21, 1.0),
            Fidelity::least_squares(vec![1.0]).unwrap(),
            0.1,
            0.0,
            Constraint::Reals,
        )
        .unwrap();
        assert!(matches!(enumerate_minimizers(&p, 2), Err(Error::CombinatorialLimit(_))));
    }
}
