//! Separable data-fidelity terms `F_y(z) = sum_m f(z_m; y_m)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FidelityKind {
    /// `½(z - y)²`
    #[serde(rename = "ls")]
    LeastSquares,
    /// `log(1 + e^z) - y z` with labels in `{0, 1}`
    #[serde(rename = "lr")]
    Logistic,
    /// `z + b - y log(z + b)`, Poisson likelihood with background `b`
    #[serde(rename = "kl")]
    KullbackLeibler,
}

impl FidelityKind {
    pub fn name(self) -> &'static str {
        match self {
            FidelityKind::LeastSquares => "ls",
            FidelityKind::Logistic => "lr",
            FidelityKind::KullbackLeibler => "kl",
        }
    }
}

fn kl_arg(z: f64, b: f64) -> Result<f64> {
    let t = z + b;
    if t > 0.0 {
        Ok(t)
    } else {
        Err(Error::Domain(format!("KL argument z + b = {t} is not positive")))
    }
}

/// Logistic sigmoid, evaluated without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `f(z; y)`. `b` is ignored except for KL.
pub fn f_value(kind: FidelityKind, z: f64, y: f64, b: f64) -> Result<f64> {
    Ok(match kind {
        FidelityKind::LeastSquares => 0.5 * (z - y) * (z - y),
        FidelityKind::Logistic => z.max(0.0) - y * z + (-z.abs()).exp().ln_1p(),
        FidelityKind::KullbackLeibler => {
            let t = kl_arg(z, b)?;
            // 0 log 0 = 0 for zero counts.
            if y == 0.0 {
                t
            } else {
                t - y * t.ln()
            }
        }
    })
}

/// `f'(z; y)`.
pub fn f_d1(kind: FidelityKind, z: f64, y: f64, b: f64) -> Result<f64> {
    Ok(match kind {
        FidelityKind::LeastSquares => z - y,
        FidelityKind::Logistic => sigmoid(z) - y,
        FidelityKind::KullbackLeibler => 1.0 - y / kl_arg(z, b)?,
    })
}

/// `f''(z; y)`.
pub fn f_d2(kind: FidelityKind, z: f64, y: f64, b: f64) -> Result<f64> {
    Ok(match kind {
        FidelityKind::LeastSquares => 1.0,
        FidelityKind::Logistic => {
            let s = sigmoid(z);
            s * (1.0 - s)
        }
        FidelityKind::KullbackLeibler => {
            let t = kl_arg(z, b)?;
            y / (t * t)
        }
    })
}

/// `sup f''` over the admissible arguments (`z >= 0` for KL).
pub fn curvature_sup(kind: FidelityKind, y: f64, b: f64) -> f64 {
    match kind {
        FidelityKind::LeastSquares => 1.0,
        FidelityKind::Logistic => 0.25,
        FidelityKind::KullbackLeibler => y / (b * b),
    }
}

/// A data term together with its observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub kind: FidelityKind,
    pub y: Vec<f64>,
    /// Background offset; only meaningful for KL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl Fidelity {
    pub fn new(kind: FidelityKind, y: Vec<f64>, b: Option<f64>) -> Result<Self> {
        let fid = Fidelity { kind, y, b };
        fid.validate()?;
        Ok(fid)
    }

    pub fn least_squares(y: Vec<f64>) -> Result<Self> {
        Self::new(FidelityKind::LeastSquares, y, None)
    }

    pub fn logistic(y: Vec<f64>) -> Result<Self> {
        Self::new(FidelityKind::Logistic, y, None)
    }

    pub fn kullback_leibler(y: Vec<f64>, b: f64) -> Result<Self> {
        Self::new(FidelityKind::KullbackLeibler, y, Some(b))
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.is_empty() {
            return Err(Error::Invalid("observation vector is empty".into()));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("observations must be finite".into()));
        }
        match self.kind {
            FidelityKind::LeastSquares => {}
            FidelityKind::Logistic => {
                if self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Invalid("logistic labels must be 0 or 1".into()));
                }
            }
            FidelityKind::KullbackLeibler => {
                if self.y.iter().any(|&v| v < 0.0) {
                    return Err(Error::Invalid("KL observations must be nonnegative".into()));
                }
                match self.b {
                    Some(b) if b > 0.0 && b.is_finite() => {}
                    _ => return Err(Error::Invalid("KL requires a background b > 0".into())),
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Background offset, `0` for kinds that do not use one.
    pub fn background(&self) -> f64 {
        self.b.unwrap_or(0.0)
    }

    /// `F_y(z)`.
    pub fn value(&self, z: &DVector<f64>) -> Result<f64> {
        self.check_len(z)?;
        let b = self.background();
        let mut acc = 0.0;
        for (zm, ym) in z.iter().zip(&self.y) {
            acc += f_value(self.kind, *zm, *ym, b)?;
        }
        Ok(acc)
    }

    /// `∇F_y(z)`.
    pub fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(z)?;
        let b = self.background();
        let mut g = DVector::zeros(z.len());
        for (m, (zm, ym)) in z.iter().zip(&self.y).enumerate() {
            g[m] = f_d1(self.kind, *zm, *ym, b)?;
        }
        Ok(g)
    }

    /// Diagonal of the Hessian of `F_y` at `z`.
    pub fn hessian_diag(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(z)?;
        let b = self.background();
        let mut h = DVector::zeros(z.len());
        for (m, (zm, ym)) in z.iter().zip(&self.y).enumerate() {
            h[m] = f_d2(self.kind, *zm, *ym, b)?;
        }
        Ok(h)
    }

    /// `sup f''` for observation `m`.
    pub fn curvature_sup_at(&self, m: usize) -> f64 {
        curvature_sup(self.kind, self.y[m], self.background())
    }

    /// Returns `(A^T ∇F_y(Ax), ∇F_y(Ax))`.
    pub fn grad_f(&self, a: &DMatrix<f64>, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if a.ncols() != x.len() {
            return Err(Error::Dimension(format!(
                "A has {} columns but x has {} entries",
                a.ncols(),
                x.len()
            )));
        }
        let gz = self.gradient(&(a * x))?;
        Ok((a.tr_mul(&gz), gz))
    }

    /// Lipschitz constant of `x -> A^T ∇F_y(Ax) + λ2 x`.
    ///
    /// For KL this is the bound over the nonnegative orthant, `max(1, max y)·||A||² / b²`,
    /// which reduces to `||A||² / b²` when all counts are at most one.
    pub fn lipschitz(&self, a: &DMatrix<f64>, lambda2: f64) -> f64 {
        let norm_sq = linalg::spectral_norm_sq(a);
        let scale = match self.kind {
            FidelityKind::LeastSquares => 1.0,
            FidelityKind::Logistic => 0.25,
            FidelityKind::KullbackLeibler => {
                let b = self.background();
                let ymax = self.y.iter().cloned().fold(1.0_f64, f64::max);
                ymax / (b * b)
            }
        };
        scale * norm_sq + lambda2
    }

    fn check_len(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.y.len() {
            return Err(Error::Dimension(format!(
                "argument has {} entries, observations have {}",
                z.len(),
                self.y.len()
            )));
        }
        Ok(())
    }
}
