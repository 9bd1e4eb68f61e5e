//! Proximal operator of `ρ β_ψ` followed by projection onto the constraint set.
//!
//! The minimizer of `β(u) + (u - x)² / (2ρ)` is searched among `{0, x} ∪ S_x`, where `S_x`
//! holds the real solutions of `u - ρψ'(u) = x - ρψ'(α±)`. Closed forms are used for the power
//! family with `p ∈ {2, 3/2, 4/3}`, Shannon and KL generators; other generators go through a
//! bracketed Newton solve.

pub mod cubic;
pub mod lambert;

use nalgebra::DVector;

use crate::generating::{CoordPenalty, GeneratorKind, GeneratorSpec, Relaxation};
use crate::problem::Constraint;

pub use cubic::cubic_real_roots;
pub use lambert::{lambert_w, lambert_w_neg_exp, Branch};

const TIE_REL: f64 = 1e-14;
const SCAN_CELLS: usize = 256;

/// Result of a scalar prox evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOutput {
    pub value: f64,
    /// More than one candidate attained the minimum; `value` is the sparsest of them.
    pub tie: bool,
}

/// `β(u) + (u - x)² / (2ρ)`.
pub fn prox_objective(g: &GeneratorSpec, rho: f64, x: f64, u: f64) -> f64 {
    g.beta_value(u) + (u - x) * (u - x) / (2.0 * rho)
}

/// Candidate minimizers `{0, x} ∪ S_x`, restricted to the constraint set.
pub fn candidate_set(g: &GeneratorSpec, rho: f64, x: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if x == 0.0 || !g.constraint().contains(x) {
        return out;
    }
    out.push(x);
    out.extend(shifted_solutions(g, rho, x));
    out.retain(|u| g.constraint().contains(*u));
    out
}

/// Real solutions of `u - ρψ'(u) = x - ρψ'(α±)`, the branch being chosen by the sign of `x`.
pub fn shifted_solutions(g: &GeneratorSpec, rho: f64, x: f64) -> Vec<f64> {
    if x == 0.0 {
        return Vec::new();
    }
    let (am, ap) = g.alpha_bounds();
    let gamma = g.gamma();
    let r = rho * gamma;
    match *g.kind() {
        GeneratorKind::Power { p } => {
            // β is even on the reals, so negative inputs are reflected.
            let s = x.signum();
            let xa = x.abs();
            let alpha = if x > 0.0 { ap } else { -am };
            let c = xa - rho * g.psi_d1_raw(alpha);
            let pos: Vec<f64> = if p == 2.0 {
                if r == 1.0 {
                    Vec::new()
                } else {
                    vec![c / (1.0 - r)]
                }
            } else if p == 1.5 {
                let disc = r * r + c;
                if disc < 0.0 {
                    Vec::new()
                } else {
                    let sq = disc.sqrt();
                    [r + sq, r - sq].into_iter().filter(|t| *t >= 0.0).map(|t| t * t).collect()
                }
            } else if (p - 4.0 / 3.0).abs() < 1e-15 {
                cubic_real_roots(1.0, 0.0, -3.0 * r, -c).into_iter().map(|z| z * z * z).collect()
            } else {
                power_numeric(p, r, c)
            };
            pos.into_iter().map(|u| s * u).collect()
        }
        GeneratorKind::Shannon => {
            if x < 0.0 {
                return Vec::new();
            }
            let c = x - rho * g.psi_d1_raw(ap);
            // u = -r W(-(1/r) e^{-c/r}); real iff -c/r - log r <= -1.
            let t = -c / r - r.ln();
            if t > -1.0 {
                return Vec::new();
            }
            [Branch::Principal, Branch::Lower]
                .into_iter()
                .filter_map(|br| lambert_w_neg_exp(br, t).ok())
                .map(|w| -r * w)
                .filter(|u| u.is_finite())
                .collect()
        }
        GeneratorKind::Kl { y, b } => {
            if x < 0.0 {
                return Vec::new();
            }
            let c = x - rho * g.psi_d1_raw(ap);
            // (u - r - c)(u + b) + r y = 0
            let bq = b - r - c;
            let cq = r * y - b * (r + c);
            let disc = bq * bq - 4.0 * cq;
            if disc < 0.0 {
                return Vec::new();
            }
            let sq = disc.sqrt();
            let q = -0.5 * (bq + bq.signum() * sq);
            let mut roots = Vec::with_capacity(2);
            if q != 0.0 {
                roots.push(q);
                roots.push(cq / q);
            } else {
                roots.push(-0.5 * bq);
            }
            roots.into_iter().filter(|u| *u + b > 0.0).collect()
        }
        GeneratorKind::FidelityMatched { .. } => {
            let alpha = if x > 0.0 { ap } else { am };
            if alpha == 0.0 {
                return Vec::new();
            }
            let c = x - rho * g.psi_d1_raw(alpha);
            let phi = |u: f64| u - rho * g.psi_d1_raw(u) - c;
            let dphi = |u: f64| 1.0 - rho * g.psi_d2_raw(u);
            scan_roots(phi, dphi, 0.0, alpha)
        }
    }
}

/// Roots of `u - (r/(p-1)) u^{p-1} = c` on `u >= 0` for a general exponent `p ∈ (1, 2)`.
fn power_numeric(p: f64, r: f64, c: f64) -> Vec<f64> {
    let k = r / (p - 1.0);
    let h = |u: f64| u - k * u.powf(p - 1.0) - c;
    let dh = |u: f64| 1.0 - r * u.powf(p - 2.0);
    // h is convex with its minimum at u_m = r^{1/(2-p)}.
    let um = r.powf(1.0 / (2.0 - p));
    if h(um) > 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    if h(0.0) >= 0.0 {
        out.push(bisect_newton(h, dh, 0.0, um));
    }
    let mut hi = um.max(1.0) * 2.0;
    let mut tries = 0;
    while h(hi) < 0.0 && tries < 200 {
        hi *= 2.0;
        tries += 1;
    }
    out.push(bisect_newton(h, dh, um, hi));
    out
}

/// Roots of `phi` on the segment between `a` and `b`, located by a sign-change scan.
fn scan_roots(phi: impl Fn(f64) -> f64, dphi: impl Fn(f64) -> f64, a: f64, b: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let step = (b - a) / SCAN_CELLS as f64;
    // Start just off zero where ψ' may be singular.
    let mut u0 = a + step * 1e-9;
    let mut f0 = phi(u0);
    for i in 1..=SCAN_CELLS {
        let u1 = a + step * i as f64;
        let f1 = phi(u1);
        if f0 == 0.0 {
            out.push(u0);
        } else if f0.is_finite() && f1.is_finite() && (f0 < 0.0) != (f1 < 0.0) && f1 != 0.0 {
            let (lo, hi) = if u0 < u1 { (u0, u1) } else { (u1, u0) };
            out.push(bisect_newton(&phi, &dphi, lo, hi));
        }
        u0 = u1;
        f0 = f1;
    }
    if f0 == 0.0 {
        out.push(u0);
    }
    out
}

/// Safeguarded Newton inside a sign-changing bracket `[lo, hi]`.
fn bisect_newton(h: impl Fn(f64) -> f64, dh: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let hlo = h(lo);
    let increasing = hlo < 0.0;
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = h(u);
        if v == 0.0 {
            return u;
        }
        if (v < 0.0) == increasing {
            lo = u;
        } else {
            hi = u;
        }
        let d = dh(u);
        let newton = u - v / d;
        let next = if d != 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - u).abs() <= 4.0 * f64::EPSILON * u.abs().max(f64::MIN_POSITIVE) || hi - lo <= 0.0 {
            return next;
        }
        u = next;
    }
    u
}

/// Scalar prox of `ρ β_ψ`, projected onto the constraint set.
pub fn prox_beta(g: &GeneratorSpec, rho: f64, x: f64) -> ProxOutput {
    let cands = candidate_set(g, rho, x);
    select(cands.into_iter().map(|u| (u, prox_objective(g, rho, x, u))), g.constraint())
}

/// Prox of `ρ λ0 |·|_0`: keeps `x` when `|x| > √(2ρλ0)`, then projects.
pub fn hard_threshold(lambda0: f64, rho: f64, x: f64, constraint: Constraint) -> ProxOutput {
    let t = (2.0 * rho * lambda0).sqrt();
    let value = if x.abs() > t { constraint.project(x) } else { 0.0 };
    ProxOutput { value, tie: x.abs() == t && x != 0.0 }
}

fn select(cands: impl Iterator<Item = (f64, f64)>, constraint: Constraint) -> ProxOutput {
    let cands: Vec<(f64, f64)> = cands.filter(|(_, v)| v.is_finite()).collect();
    let best = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let tol = TIE_REL * best.abs().max(f64::MIN_POSITIVE);
    let mut chosen: Option<f64> = None;
    let mut distinct = 0usize;
    for &(u, v) in &cands {
        if v <= best + tol {
            match chosen {
                None => {
                    chosen = Some(u);
                    distinct = 1;
                }
                Some(c) => {
                    if u != c {
                        distinct += 1;
                    }
                    let better = if c == 0.0 {
                        false
                    } else if u == 0.0 {
                        true
                    } else {
                        u.abs() < c.abs()
                    };
                    if better {
                        chosen = Some(u);
                    }
                }
            }
        }
    }
    let value = constraint.project(chosen.unwrap_or(0.0));
    ProxOutput { value, tie: distinct > 1 }
}

/// Coordinate-wise prox of `1_{C^N} + ρ B_Ψ`.
pub fn prox_vector(relax: &Relaxation, rho: f64, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter().enumerate().map(|(n, &v)| match &relax.coords[n] {
            CoordPenalty::Brex(g) => prox_beta(g, rho, v).value,
            CoordPenalty::L0 => hard_threshold(relax.lambda0, rho, v, relax.constraint).value,
        }),
    )
}

/// Coordinate-wise hard threshold, the prox of `1_{C^N} + ρ λ0 ||·||_0`.
pub fn hard_threshold_vector(lambda0: f64, rho: f64, x: &DVector<f64>, constraint: Constraint) -> DVector<f64> {
    x.map(|v| hard_threshold(lambda0, rho, v, constraint).value)
}
