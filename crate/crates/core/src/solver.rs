//! Proximal gradient descent on `J_Ψ` (B-rex penalty) or directly on `J_0` (hard threshold).

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generating::Relaxation;
use crate::problem::Problem;
use crate::prox;

/// Backtracking starts from this multiple of `1/L`; the Lipschitz bounds are often loose.
pub const DEFAULT_RHO0_FACTOR: f64 = 4.0;
const MAX_SHRINKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step; must satisfy `ρ < 1/L`.
    Fixed { rho: f64 },
    /// Armijo-type backtracking on the quadratic upper model of the smooth part.
    Backtracking {
        /// Initial and maximal step; `None` means `DEFAULT_RHO0_FACTOR / L`.
        rho0: Option<f64>,
        shrink: f64,
        growth: f64,
        /// Multiplier `c` of `||d||² / (2ρ)` in the acceptance test.
        sufficient_decrease: f64,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking { rho0: None, shrink: 0.5, growth: 1.25, sufficient_decrease: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step: StepRule,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Starting point; zero when absent.
    pub x0: Option<Vec<f64>>,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { step: StepRule::default(), max_iter: 5000, rel_tol: 1e-6, x0: None, record_trace: true }
    }
}

impl SolverConfig {
    pub fn fixed(rho: f64) -> Self {
        SolverConfig { step: StepRule::Fixed { rho }, ..Default::default() }
    }

    fn validate(&self, problem: &Problem) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::Invalid("rel_tol must be nonnegative".into()));
        }
        match self.step {
            StepRule::Fixed { rho } => {
                let l = problem.lipschitz();
                if !(rho > 0.0 && rho * l < 1.0) {
                    return Err(Error::Invalid(format!("fixed step {rho} must lie in (0, 1/L) with L = {l}")));
                }
            }
            StepRule::Backtracking { rho0, shrink, growth, sufficient_decrease } => {
                if let Some(r) = rho0 {
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(Error::Invalid(format!("rho0 must be positive, got {r}")));
                    }
                }
                if !(shrink > 0.0 && shrink < 1.0) {
                    return Err(Error::Invalid(format!("shrink must lie in (0, 1), got {shrink}")));
                }
                if !(growth >= 1.0) {
                    return Err(Error::Invalid(format!("growth must be at least 1, got {growth}")));
                }
                if !(sufficient_decrease > 0.0 && sufficient_decrease <= 1.0) {
                    return Err(Error::Invalid("sufficient-decrease constant must lie in (0, 1]".into()));
                }
            }
        }
        if let Some(x0) = &self.x0 {
            problem.check_feasible(&DVector::from_column_slice(x0))?;
        }
        Ok(())
    }
}

/// Penalty the solver descends on.
#[derive(Debug, Clone, Copy)]
pub enum Penalty<'a> {
    L0,
    Relaxation(&'a Relaxation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
    DomainError,
}

/// One iteration record; `j_psi` is the penalized objective actually minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub j_psi: f64,
    pub j0: f64,
    pub step: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub stop_reason: StopReason,
    pub iterations: usize,
}

impl SolveResult {
    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    /// Writes the trace as CSV with header `iter,J_Psi,J_0,step,delta`.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iter", "J_Psi", "J_0", "step", "delta"])?;
        for row in &self.trace {
            wr.write_record([
                row.iter.to_string(),
                fmt17(row.j_psi),
                fmt17(row.j0),
                fmt17(row.step),
                fmt17(row.delta),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.17e}")
}

/// `J_0(x)`.
pub fn objective_j0(problem: &Problem, x: &DVector<f64>) -> Result<f64> {
    problem.objective_j0(x)
}

/// `J_Ψ(x) = F_y(Ax) + B_Ψ(x) + (λ2/2)||x||²`.
pub fn objective_jpsi(problem: &Problem, relax: &Relaxation, x: &DVector<f64>) -> Result<f64> {
    problem.check_feasible(x)?;
    check_relaxation(problem, relax)?;
    Ok(problem.smooth_value(x)? + relax.brex_value(x.as_slice()))
}

fn penalized(problem: &Problem, penalty: Penalty, x: &DVector<f64>) -> Result<f64> {
    match penalty {
        Penalty::L0 => problem.objective_j0(x),
        Penalty::Relaxation(r) => objective_jpsi(problem, r, x),
    }
}

fn check_relaxation(problem: &Problem, relax: &Relaxation) -> Result<()> {
    if relax.len() != problem.n() {
        return Err(Error::Dimension(format!(
            "relaxation has {} coordinates, problem has {}",
            relax.len(),
            problem.n()
        )));
    }
    Ok(())
}

fn backward(problem: &Problem, penalty: Penalty, rho: f64, w: &DVector<f64>) -> DVector<f64> {
    match penalty {
        Penalty::L0 => prox::hard_threshold_vector(problem.lambda0, rho, w, problem.constraint),
        Penalty::Relaxation(r) => prox::prox_vector(r, rho, w),
    }
}

/// One forward-backward step with step size `rho`.
pub fn pga_step(problem: &Problem, penalty: Penalty, rho: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if let Penalty::Relaxation(r) = penalty {
        check_relaxation(problem, r)?;
    }
    let g = problem.smooth_gradient(x)?;
    Ok(backward(problem, penalty, rho, &(x - g * rho)))
}

/// Runs proximal gradient descent until the iterates stall or `max_iter` is reached.
pub fn solve(problem: &Problem, penalty: Penalty, config: &SolverConfig) -> Result<SolveResult> {
    config.validate(problem)?;
    if let Penalty::Relaxation(r) = penalty {
        check_relaxation(problem, r)?;
    }
    let n = problem.n();
    let mut x = match &config.x0 {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(n),
    };
    let (rho_max, fixed, shrink, growth, c) = match config.step {
        StepRule::Fixed { rho } => (rho, true, 1.0, 1.0, 1.0),
        StepRule::Backtracking { rho0, shrink, growth, sufficient_decrease } => {
            let r = rho0.unwrap_or_else(|| DEFAULT_RHO0_FACTOR / problem.lipschitz());
            (r, false, shrink, growth, sufficient_decrease)
        }
    };
    let mut rho = rho_max;
    let mut trace = Vec::new();

    let mut s = match problem.smooth_value(&x) {
        Ok(v) => v,
        Err(Error::Domain(_)) => {
            return Ok(SolveResult { x: x.as_slice().to_vec(), trace, stop_reason: StopReason::DomainError, iterations: 0 })
        }
        Err(e) => return Err(e),
    };
    if config.record_trace {
        trace.push(TraceRow {
            iter: 0,
            j_psi: penalized(problem, penalty, &x)?,
            j0: problem.objective_j0(&x)?,
            step: rho,
            delta: 0.0,
        });
    }

    let mut stop = StopReason::MaxIter;
    let mut iterations = 0;
    for k in 1..=config.max_iter {
        let grad = problem.smooth_gradient(&x)?;
        let mut shrinks = 0;
        let (x_new, s_new) = loop {
            let cand = backward(problem, penalty, rho, &(&x - &grad * rho));
            let d = &cand - &x;
            let s_cand = match problem.smooth_value(&cand) {
                Ok(v) => v,
                Err(Error::Domain(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let model = s + grad.dot(&d) + c * d.norm_squared() / (2.0 * rho);
            let slack = 1e-14 * s.abs().max(1.0);
            if s_cand.is_finite() && (fixed || s_cand <= model + slack) {
                break (Some(cand), s_cand);
            }
            if fixed || shrinks >= MAX_SHRINKS {
                break (None, f64::INFINITY);
            }
            rho *= shrink;
            shrinks += 1;
        };
        let Some(x_new) = x_new else {
            stop = StopReason::DomainError;
            break;
        };
        iterations = k;
        let delta = (&x_new - &x).norm();
        let scale = x.norm().max(1.0);
        x = x_new;
        s = s_new;
        if config.record_trace {
            trace.push(TraceRow {
                iter: k,
                j_psi: penalized(problem, penalty, &x)?,
                j0: problem.objective_j0(&x)?,
                step: rho,
                delta,
            });
        }
        if delta < config.rel_tol * scale {
            stop = StopReason::Tolerance;
            break;
        }
        if !fixed {
            rho = (rho * growth).min(rho_max);
        }
    }
    Ok(SolveResult { x: x.as_slice().to_vec(), trace, stop_reason: stop, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, CalibrationMode, PsiFamily};
    use crate::fidelity::Fidelity;
    use crate::problem::Constraint;
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

    #[test]
    fn objectives_at_zero_agree() {
        let p = ls_2d();
        let relax = calibrate(&p, PsiFamily::Power { p: 2.0 }, CalibrationMode::AtThreshold).unwrap();
        let z = DVector::zeros(2);
        assert_eq!(objective_j0(&p, &z).unwrap(), objective_jpsi(&p, &relax, &z).unwrap());
        let x = DVector::from_vec(vec![0.0, 0.7]);
        assert!((objective_j0(&p, &x).unwrap() - 0.55).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let p = ls_2d();
        let relax = calibrate(&p, PsiFamily::Power { p: 2.0 }, CalibrationMode::AtThreshold).unwrap();
        // Exact minimizer of the restricted problem on support {2}.
        let x = DVector::from_vec(vec![0.0, 0.7]);
        let next = pga_step(&p, Penalty::Relaxation(&relax), 0.05, &x).unwrap();
        assert!((next - x).norm() < 1e-14);
    }

    #[test]
    fn l0_large_lambda_collapses_to_zero() {
        let p = Problem::new(
            DMatrix::from_element(1, 1, 1.0),
            Fidelity::least_squares(vec![1.0]).unwrap(),
            5.0,
            0.0,
            Constraint::Reals,
        )
        .unwrap();
        let res = solve(&p, Penalty::L0, &SolverConfig::default()).unwrap();
        assert_eq!(res.x, vec![0.0]);
        assert_eq!(res.stop_reason, StopReason::Tolerance);
    }

    #[test]
    fn tiny_penalty_recovers_least_squares() {
        let p = Problem::new(
            DMatrix::from_element(1, 1, 2.0),
            Fidelity::least_squares(vec![3.0]).unwrap(),
            1e-12,
            0.0,
            Constraint::Reals,
        )
        .unwrap();
        let res = solve(&p, Penalty::L0, &SolverConfig { rel_tol: 1e-12, ..Default::default() }).unwrap();
        assert!((res.x[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn ls_2d_relaxation_finds_global() {
        let p = ls_2d();
        let relax = calibrate(&p, PsiFamily::Power { p: 2.0 }, CalibrationMode::AtThreshold).unwrap();
        let res = solve(&p, Penalty::Relaxation(&relax), &SolverConfig::default()).unwrap();
        let x = res.x_vector();
        assert!(objective_j0(&p, &x).unwrap() <= 0.55 + 1e-6, "x = {x}");
    }

    #[test]
    fn fixed_step_trace_is_monotone() {
        let p = ls_2d();
        let relax = calibrate(&p, PsiFamily::Power { p: 1.5 }, CalibrationMode::AtThreshold).unwrap();
        let cfg = SolverConfig::fixed(0.99 / p.lipschitz());
        let res = solve(&p, Penalty::Relaxation(&relax), &cfg).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1].j_psi <= w[0].j_psi + 1e-12);
        }
    }

    #[test]
    fn fixed_step_too_large_is_rejected() {
        let p = ls_2d();
        assert!(matches!(solve(&p, Penalty::L0, &SolverConfig::fixed(1.01 / 16.0)), Err(Error::Invalid(_))));
    }

    #[test]
    fn trace_csv_has_header() {
        let p = ls_2d();
        let res = solve(&p, Penalty::L0, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        res.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,J_Psi,J_0,step,delta\n"));
        assert_eq!(text.lines().count(), res.trace.len() + 1);
    }
}
