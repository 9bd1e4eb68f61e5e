//! Real branches of the Lambert W function.

use crate::error::{Error, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;
const MAX_ITER: usize = 50;

/// Real branch of `W`: `W_0` on `[-1/e, ∞)` and `W_{-1}` on `[-1/e, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Principal,
    Lower,
}

/// Solves `w e^w = z` on the requested branch.
pub fn lambert_w(branch: Branch, z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::Domain("Lambert W of NaN".into()));
    }
    // Tolerate the rounding of -1/e itself.
    if z < -INV_E {
        if z >= -INV_E * (1.0 + 4.0 * f64::EPSILON) {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!("Lambert W argument {z} is below -1/e")));
    }
    match branch {
        Branch::Principal => {
            if z == 0.0 {
                return Ok(0.0);
            }
            if z == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            Ok(halley(z, principal_seed(z)))
        }
        Branch::Lower => {
            if z >= 0.0 {
                return Err(Error::Domain(format!(
                    "lower Lambert branch needs -1/e <= z < 0, got {z}"
                )));
            }
            Ok(halley(z, lower_seed(z)))
        }
    }
}

/// `W_k(-e^t)` for `t <= -1`, robust when `e^t` underflows.
pub fn lambert_w_neg_exp(branch: Branch, t: f64) -> Result<f64> {
    if t > -1.0 {
        if t <= -1.0 + 1e-15 {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!("argument -exp({t}) is below -1/e")));
    }
    match branch {
        Branch::Principal => {
            if t < -700.0 {
                // W_0(z) = z + O(z²)
                Ok(-t.exp())
            } else {
                lambert_w(Branch::Principal, -t.exp())
            }
        }
        Branch::Lower => {
            if t > -30.0 {
                return lambert_w(Branch::Lower, -t.exp());
            }
            // Newton on w + ln(-w) = t, w < -1.
            let mut w = t - (-t).ln();
            for _ in 0..MAX_ITER {
                let h = w + (-w).ln() - t;
                let step = h / (1.0 + 1.0 / w);
                w -= step;
                if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
                    break;
                }
            }
            Ok(w)
        }
    }
}

fn branch_point_p(z: f64) -> f64 {
    (2.0 * (std::f64::consts::E * z + 1.0)).max(0.0).sqrt()
}

fn principal_seed(z: f64) -> f64 {
    if z < -0.25 {
        let p = branch_point_p(z);
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z.abs() <= 0.25 {
        z - z * z + 1.5 * z * z * z
    } else if z < std::f64::consts::E {
        // ln(1 + z) overestimates mildly on this range; Halley corrects in a few steps.
        0.7 * z.ln_1p()
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

fn lower_seed(z: f64) -> f64 {
    if z < -0.25 {
        let p = branch_point_p(z);
        -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-z).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    }
}

fn halley(z: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        w = next;
        if step.abs() <= 2.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    w
}
