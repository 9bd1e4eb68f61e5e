use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{Fidelity, FidelityKind};

/// Feasible set for every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    Reals,
    Nonneg,
}

impl Constraint {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Constraint::Reals => x.is_finite(),
            Constraint::Nonneg => x >= 0.0 && x.is_finite(),
        }
    }

    pub fn project(self, x: f64) -> f64 {
        match self {
            Constraint::Reals => x,
            Constraint::Nonneg => x.max(0.0),
        }
    }
}

/// `min_{x ∈ C^N} F_y(Ax) + λ0 ||x||_0 + (λ2/2) ||x||²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub a: DMatrix<f64>,
    pub fidelity: Fidelity,
    pub lambda0: f64,
    pub lambda2: f64,
    pub constraint: Constraint,
}

impl Problem {
    pub fn new(
        a: DMatrix<f64>,
        fidelity: Fidelity,
        lambda0: f64,
        lambda2: f64,
        constraint: Constraint,
    ) -> Result<Self> {
        let p = Problem { a, fidelity, lambda0, lambda2, constraint };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.fidelity.validate()?;
        if self.a.nrows() != self.fidelity.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but there are {} observations",
                self.a.nrows(),
                self.fidelity.len()
            )));
        }
        if self.a.ncols() == 0 {
            return Err(Error::Dimension("A has no columns".into()));
        }
        if self.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("A contains non-finite entries".into()));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::Invalid(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::Invalid(format!("lambda2 must be nonnegative, got {}", self.lambda2)));
        }
        if self.fidelity.kind == FidelityKind::KullbackLeibler {
            if self.a.iter().any(|&v| v < 0.0) {
                return Err(Error::Invalid("KL requires a nonnegative matrix A".into()));
            }
            if self.constraint != Constraint::Nonneg {
                return Err(Error::Invalid("KL requires the nonnegative constraint".into()));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `F_y(Ax) + (λ2/2)||x||²`, the smooth part shared by both objectives.
    pub fn smooth_value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.fidelity.value(&(&self.a * x))? + 0.5 * self.lambda2 * x.norm_squared())
    }

    /// Gradient of the smooth part: `A^T ∇F_y(Ax) + λ2 x`.
    pub fn smooth_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (g, _) = self.fidelity.grad_f(&self.a, x)?;
        Ok(g + x * self.lambda2)
    }

    /// `J_0(x)`; `+∞` is never returned, infeasible points give an error.
    pub fn objective_j0(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_feasible(x)?;
        let nnz = x.iter().filter(|v| **v != 0.0).count();
        Ok(self.smooth_value(x)? + self.lambda0 * nnz as f64)
    }

    /// `F_y(0)`, handy for scaling λ0.
    pub fn data_at_zero(&self) -> Result<f64> {
        self.fidelity.value(&DVector::zeros(self.m()))
    }

    /// Lipschitz constant of the smooth gradient.
    pub fn lipschitz(&self) -> f64 {
        self.fidelity.lipschitz(&self.a, self.lambda2)
    }

    pub fn check_feasible(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("x has {} entries, expected {}", x.len(), self.n())));
        }
        if let Some(v) = x.iter().find(|v| !self.constraint.contains(**v)) {
            return Err(Error::Domain(format!("coordinate {v} is outside the constraint set")));
        }
        Ok(())
    }
}
