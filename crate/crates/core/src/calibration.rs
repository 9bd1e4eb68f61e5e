//! Per-coordinate curvature thresholds that make the relaxation exact.
//!
//! For coordinate `n` the relaxation is exact as soon as
//! `inf ψ_n'' >= λ2 + Σ_m a_mn² sup f''_m` over the nonlinear part of β. Each generator family
//! turns this into a lower bound `γ̂_n` on its curvature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generating::{CoordPenalty, GeneratorKind, GeneratorSpec, Relaxation};
use crate::linalg;
use crate::problem::{Constraint, Problem};
use crate::prox::lambert::{lambert_w_neg_exp, Branch};

const BISECTION_STEPS: usize = 200;

/// Generator family requested for every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiFamily {
    Power { p: f64 },
    Shannon,
    /// KL generator; `y` defaults to 1 and `b` to the data background.
    Kl { y: Option<f64>, b: Option<f64> },
    /// `ψ_n = γ (f(a_n x; y_n) + (λ2/2) x²)`; needs a diagonal design.
    Matched,
}

impl PsiFamily {
    pub fn label(&self) -> String {
        match self {
            PsiFamily::Power { p } => format!("power:{p}"),
            PsiFamily::Shannon => "shannon".into(),
            PsiFamily::Kl { .. } => "kl".into(),
            PsiFamily::Matched => "matched".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CalibrationMode {
    /// `γ_n = γ̂_n`.
    AtThreshold,
    /// `γ_n = (1 + margin) γ̂_n`.
    Strict { margin: f64 },
    /// Curvatures given by the caller.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub family: String,
    pub mode: CalibrationMode,
    pub gamma_thr: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `γ_n >= γ̂_n`.
    pub exact: Vec<bool>,
    /// `||a_n||²`.
    pub column_norms: Vec<f64>,
}

/// Right-hand side `λ2 + Σ_m a_mn² sup f''_m`.
pub fn curvature_rhs(problem: &Problem, n: usize) -> f64 {
    let col = problem.a.column(n);
    let mut acc = problem.lambda2;
    for (m, a) in col.iter().enumerate() {
        if *a != 0.0 {
            acc += a * a * problem.fidelity.curvature_sup_at(m);
        }
    }
    acc
}

fn column_is_zero(problem: &Problem, n: usize) -> bool {
    problem.a.column(n).iter().all(|v| *v == 0.0)
}

/// Closed-form threshold `γ̂_n`; `0` for columns that carry no curvature.
pub fn gamma_threshold(problem: &Problem, family: PsiFamily, n: usize) -> Result<f64> {
    check_pairing(problem, family)?;
    let rhs = curvature_rhs(problem, n);
    if column_is_zero(problem, n) || rhs == 0.0 {
        return Ok(0.0);
    }
    let l0 = problem.lambda0;
    match family {
        PsiFamily::Power { p } => {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::Invalid(format!("power exponent must lie in (1, 2], got {p}")));
            }
            Ok((p * l0).powf((2.0 - p) / 2.0) * rhs.powf(p / 2.0))
        }
        PsiFamily::Shannon => Ok((l0 * rhs).sqrt()),
        PsiFamily::Kl { .. } => {
            let (y, b) = kl_params(problem, family)?;
            kl_threshold(l0, y, b, rhs)
        }
        PsiFamily::Matched => generic_threshold(problem, family, n),
    }
}

/// Smallest γ with `γ y W0(-e^{-1-λ0/(yγ)})² / b² >= rhs`.
fn kl_threshold(lambda0: f64, y: f64, b: f64, rhs: f64) -> Result<f64> {
    let lhs = |g: f64| -> f64 {
        match lambert_w_neg_exp(Branch::Principal, -1.0 - lambda0 / (y * g)) {
            Ok(w) => g * y * w * w / (b * b),
            Err(_) => f64::NAN,
        }
    };
    bisect_gamma(|g| lhs(g) >= rhs, rhs * b * b / y)
}

/// Threshold from a numeric infimum of `ψ''` over the sublevel interval, by bisection on γ.
pub fn generic_threshold(problem: &Problem, family: PsiFamily, n: usize) -> Result<f64> {
    check_pairing(problem, family)?;
    let rhs = curvature_rhs(problem, n);
    if column_is_zero(problem, n) || rhs == 0.0 {
        return Ok(0.0);
    }
    let kind = generator_kind(problem, family, n)?;
    let satisfied = |g: f64| match GeneratorSpec::new(kind, g, problem.lambda0, problem.constraint) {
        Ok(spec) => spec.inf_psi_d2() >= rhs,
        Err(_) => false,
    };
    bisect_gamma(satisfied, rhs)
}

/// Smallest γ > 0 with `ok(γ)`, assuming `ok` is monotone; bisection in log γ.
fn bisect_gamma(ok: impl Fn(f64) -> bool, guess: f64) -> Result<f64> {
    let mut hi = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    let mut lo;
    if ok(hi) {
        lo = hi / 2.0;
        let mut steps = 0;
        while ok(lo) {
            hi = lo;
            lo /= 2.0;
            steps += 1;
            if steps > BISECTION_STEPS || lo < f64::MIN_POSITIVE {
                return Err(Error::Convergence("threshold bracket collapsed towards zero".into()));
            }
        }
    } else {
        lo = hi;
        hi *= 2.0;
        let mut steps = 0;
        while !ok(hi) {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > BISECTION_STEPS || !hi.is_finite() {
                return Err(Error::Convergence("could not bracket the curvature threshold".into()));
            }
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            return Ok(hi);
        }
    }
    Err(Error::Convergence("threshold bisection did not converge".into()))
}

fn check_pairing(problem: &Problem, family: PsiFamily) -> Result<()> {
    match family {
        PsiFamily::Shannon | PsiFamily::Kl { .. } if problem.constraint != Constraint::Nonneg => {
            Err(Error::UnsupportedPairing(format!(
                "the {} generator is defined on the nonnegative orthant only",
                family.label()
            )))
        }
        PsiFamily::Matched => {
            for n in 0..problem.n() {
                if problem.a.column(n).iter().filter(|v| **v != 0.0).count() > 1 {
                    return Err(Error::UnsupportedPairing(
                        "fidelity-matched generators need at most one nonzero per column".into(),
                    ));
                }
            }
            for m in 0..problem.m() {
                if problem.a.row(m).iter().filter(|v| **v != 0.0).count() > 1 {
                    return Err(Error::UnsupportedPairing(
                        "fidelity-matched generators need at most one nonzero per row".into(),
                    ));
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn kl_params(problem: &Problem, family: PsiFamily) -> Result<(f64, f64)> {
    let PsiFamily::Kl { y, b } = family else {
        unreachable!("kl_params called for a non-KL family")
    };
    let y = y.unwrap_or(1.0);
    let b = match b.or(problem.fidelity.b) {
        Some(b) => b,
        None => {
            return Err(Error::Invalid(
                "the KL generator needs a background b for non-KL data terms".into(),
            ))
        }
    };
    if !(y > 0.0 && b > 0.0) {
        return Err(Error::Invalid("the KL generator needs y > 0 and b > 0".into()));
    }
    Ok((y, b))
}

/// Generator shape used for coordinate `n`.
pub fn generator_kind(problem: &Problem, family: PsiFamily, n: usize) -> Result<GeneratorKind> {
    Ok(match family {
        PsiFamily::Power { p } => GeneratorKind::Power { p },
        PsiFamily::Shannon => GeneratorKind::Shannon,
        PsiFamily::Kl { .. } => {
            let (y, b) = kl_params(problem, family)?;
            GeneratorKind::Kl { y, b }
        }
        PsiFamily::Matched => {
            let col = problem.a.column(n);
            let m = col
                .iter()
                .position(|v| *v != 0.0)
                .ok_or_else(|| Error::Invalid(format!("column {n} is zero")))?;
            GeneratorKind::FidelityMatched {
                fidelity: problem.fidelity.kind,
                a: col[m],
                y: problem.fidelity.y[m],
                b: problem.fidelity.background(),
                lambda2: problem.lambda2,
            }
        }
    })
}

/// Thresholds and a relaxation with `γ` set according to `mode`.
pub fn calibrate(problem: &Problem, family: PsiFamily, mode: CalibrationMode) -> Result<Relaxation> {
    let factor = match mode {
        CalibrationMode::AtThreshold => 1.0,
        CalibrationMode::Strict { margin } => {
            if !(margin >= 0.0 && margin.is_finite()) {
                return Err(Error::Invalid(format!("margin must be nonnegative, got {margin}")));
            }
            1.0 + margin
        }
        CalibrationMode::Explicit => {
            return Err(Error::Invalid("explicit curvatures go through calibrate_explicit".into()))
        }
    };
    let thr = thresholds(problem, family)?;
    let gamma: Vec<f64> = thr.iter().map(|t| t * factor).collect();
    build(problem, family, mode, thr, gamma)
}

/// Relaxation with caller-chosen curvatures, flagged against the thresholds.
pub fn calibrate_explicit(problem: &Problem, family: PsiFamily, gamma: &[f64]) -> Result<Relaxation> {
    if gamma.len() != problem.n() {
        return Err(Error::Dimension(format!(
            "{} curvatures given for {} coordinates",
            gamma.len(),
            problem.n()
        )));
    }
    let thr = thresholds(problem, family)?;
    build(problem, family, CalibrationMode::Explicit, thr, gamma.to_vec())
}

/// `γ̂_n` for every coordinate, computed in parallel.
pub fn thresholds(problem: &Problem, family: PsiFamily) -> Result<Vec<f64>> {
    check_pairing(problem, family)?;
    (0..problem.n())
        .into_par_iter()
        .map(|n| gamma_threshold(problem, family, n))
        .collect()
}

fn build(
    problem: &Problem,
    family: PsiFamily,
    mode: CalibrationMode,
    gamma_thr: Vec<f64>,
    gamma: Vec<f64>,
) -> Result<Relaxation> {
    let coords = (0..problem.n())
        .map(|n| {
            if gamma_thr[n] == 0.0 && mode != CalibrationMode::Explicit {
                return Ok(CoordPenalty::L0);
            }
            let kind = generator_kind(problem, family, n)?;
            GeneratorSpec::new(kind, gamma[n], problem.lambda0, problem.constraint).map(CoordPenalty::Brex)
        })
        .collect::<Result<Vec<_>>>()?;
    let exact = gamma.iter().zip(&gamma_thr).map(|(g, t)| g >= t).collect();
    let mut relax = Relaxation::new(problem.lambda0, problem.constraint, coords);
    relax.report = Some(CalibrationReport {
        family: family.label(),
        mode,
        gamma_thr,
        gamma,
        exact,
        column_norms: linalg::column_norms_sq(&problem.a),
    });
    Ok(relax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::Fidelity;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

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

    fn lr_2d() -> Problem {
        Problem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 2.0, 0.2]),
            Fidelity::logistic(vec![1.0, 0.0]).unwrap(),
            1.0,
            0.1,
            Constraint::Reals,
        )
        .unwrap()
    }

    fn kl_2d() -> Problem {
        let mut p = Problem::new(
            DMatrix::from_row_slice(2, 2, &[0.45, 0.8, 0.85, 0.25]),
            Fidelity::kullback_leibler(vec![0.2, 0.2], 0.1).unwrap(),
            1.0,
            0.0,
            Constraint::Nonneg,
        )
        .unwrap();
        p.lambda0 = 0.06 * p.data_at_zero().unwrap();
        p
    }

    #[test]
    fn ls_power2_threshold_is_column_norm() {
        let p = ls_2d();
        let t = thresholds(&p, PsiFamily::Power { p: 2.0 }).unwrap();
        assert_relative_eq!(t[0], 10.0, max_relative = 1e-14);
        assert_relative_eq!(t[1], 10.0, max_relative = 1e-14);
        let relax = calibrate(&p, PsiFamily::Power { p: 2.0 }, CalibrationMode::AtThreshold).unwrap();
        let g = relax.generator(0).unwrap();
        assert_relative_eq!(g.alpha_bounds().1, 0.1f64.sqrt(), max_relative = 1e-14);
        assert!(relax.is_exact());
    }

    #[test]
    fn lr_power2_threshold() {
        let p = lr_2d();
        let t = gamma_threshold(&p, PsiFamily::Power { p: 2.0 }, 0).unwrap();
        assert_relative_eq!(t, 1.35, max_relative = 1e-14);
    }

    #[test]
    fn zero_column_gets_l0_penalty() {
        let p = Problem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]),
            Fidelity::least_squares(vec![1.0, 2.0]).unwrap(),
            0.5,
            0.0,
            Constraint::Reals,
        )
        .unwrap();
        let relax = calibrate(&p, PsiFamily::Power { p: 2.0 }, CalibrationMode::AtThreshold).unwrap();
        assert_eq!(relax.report.as_ref().unwrap().gamma_thr[1], 0.0);
        assert_eq!(relax.coords[1], CoordPenalty::L0);
    }

    #[test]
    fn strict_with_zero_margin_equals_threshold() {
        let p = lr_2d();
        let a = calibrate(&p, PsiFamily::Power { p: 1.5 }, CalibrationMode::AtThreshold).unwrap();
        let b = calibrate(&p, PsiFamily::Power { p: 1.5 }, CalibrationMode::Strict { margin: 0.0 }).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.report.unwrap().gamma, b.report.unwrap().gamma);
    }

    #[test]
    fn closed_forms_agree_with_generic_bisection() {
        for p in [ls_2d(), lr_2d(), kl_2d()] {
            let mut fams = vec![
                PsiFamily::Power { p: 2.0 },
                PsiFamily::Power { p: 1.5 },
                PsiFamily::Power { p: 4.0 / 3.0 },
            ];
            if p.constraint == Constraint::Nonneg {
                fams.push(PsiFamily::Shannon);
                fams.push(PsiFamily::Kl { y: None, b: None });
            }
            for fam in fams {
                for n in 0..p.n() {
                    let closed = gamma_threshold(&p, fam, n).unwrap();
                    let generic = generic_threshold(&p, fam, n).unwrap();
                    assert_relative_eq!(closed, generic, max_relative = 1e-8);
                }
            }
        }
    }

    #[test]
    fn kl_generator_threshold_reduces_to_table_form() {
        // With generator y = 1 and λ2 = 0 the threshold solves γ W(-b e^{-κ})² = Σ_m a_mn² y_m.
        let p = kl_2d();
        let fam = PsiFamily::Kl { y: None, b: None };
        for n in 0..2 {
            let g = gamma_threshold(&p, fam, n).unwrap();
            let w = lambert_w_neg_exp(Branch::Principal, -1.0 - p.lambda0 / g).unwrap();
            let s: f64 = (0..2).map(|m| p.a[(m, n)].powi(2) * p.fidelity.y[m]).sum();
            assert_relative_eq!(g * w * w, s, max_relative = 1e-9);
        }
    }

    #[test]
    fn curvature_condition_holds_on_grid() {
        // g''(t) = Σ a² f''(z + t a) - ψ''(t) + λ2 <= 0 along each coordinate.
        for p in [ls_2d(), lr_2d(), kl_2d()] {
            let relax = calibrate(&p, PsiFamily::Power { p: 1.5 }, CalibrationMode::AtThreshold).unwrap();
            for n in 0..p.n() {
                let g = relax.generator(n).unwrap();
                let (am, ap) = g.alpha_bounds();
                for k in 1..1000 {
                    let t = am + (ap - am) * k as f64 / 1000.0;
                    if t == 0.0 {
                        continue;
                    }
                    let base: Vec<f64> = (0..p.m()).map(|m| 0.3 * (m as f64 + 1.0)).collect();
                    let mut curv = p.lambda2 - g.psi_d2_raw(t);
                    for m in 0..p.m() {
                        let a = p.a[(m, n)];
                        let z = base[m] + t * a;
                        let f2 = crate::fidelity::f_d2(p.fidelity.kind, z, p.fidelity.y[m], p.fidelity.background())
                            .unwrap();
                        curv += a * a * f2;
                    }
                    assert!(curv <= 1e-9, "curvature {curv} at t={t}");
                }
            }
        }
    }

    #[test]
    fn unsupported_pairings() {
        let p = ls_2d();
        assert!(matches!(
            thresholds(&p, PsiFamily::Shannon),
            Err(Error::UnsupportedPairing(_))
        ));
        assert!(matches!(thresholds(&p, PsiFamily::Matched), Err(Error::UnsupportedPairing(_))));
    }

    #[test]
    fn matched_ls_threshold_is_one() {
        let p = Problem::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -0.5]),
            Fidelity::least_squares(vec![1.0, 2.0]).unwrap(),
            0.3,
            0.2,
            Constraint::Reals,
        )
        .unwrap();
        let t = thresholds(&p, PsiFamily::Matched).unwrap();
        for v in t {
            assert_relative_eq!(v, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn thresholds_monotone_in_column_norm_and_ridge() {
        let mut prev = 0.0;
        for s in 1..10 {
            let p = Problem::new(
                DMatrix::from_row_slice(2, 1, &[0.3 * s as f64, 0.1]),
                Fidelity::logistic(vec![1.0, 0.0]).unwrap(),
                0.5,
                0.01 * s as f64,
                Constraint::Reals,
            )
            .unwrap();
            let t = gamma_threshold(&p, PsiFamily::Power { p: 1.5 }, 0).unwrap();
            assert!(t >= prev);
            prev = t;
        }
    }
}
