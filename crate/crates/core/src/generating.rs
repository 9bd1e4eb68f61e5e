//! Generating functions, their Bregman distances and the one-dimensional B-rex penalty.

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationReport;
use crate::error::{Error, Result};
use crate::fidelity::{self, FidelityKind};
use crate::problem::Constraint;
use crate::prox::lambert::{lambert_w_neg_exp, Branch};

const BRACKET_DOUBLINGS: usize = 200;
const ROOT_TOL: f64 = 1e-12;

/// Shape of a generating function `ψ = γ ψ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `γ |x|^p / (p (p - 1))`, `p ∈ (1, 2]`.
    Power { p: f64 },
    /// `γ (x log x - x + 1)` on `x >= 0`.
    Shannon,
    /// `γ (x + b - y log(x + b))` on `x >= 0`.
    Kl { y: f64, b: f64 },
    /// `γ (f(a x; y) + (λ2/2) x²)` built from a one-dimensional data term.
    FidelityMatched {
        fidelity: FidelityKind,
        a: f64,
        y: f64,
        b: f64,
        lambda2: f64,
    },
}

impl GeneratorKind {
    pub fn label(&self) -> String {
        match self {
            GeneratorKind::Power { p } => format!("power:{p}"),
            GeneratorKind::Shannon => "shannon".into(),
            GeneratorKind::Kl { y, b } => format!("kl:{y},{b}"),
            GeneratorKind::FidelityMatched { fidelity, .. } => format!("matched:{}", fidelity.name()),
        }
    }
}

/// One generating function with its curvature and the derived sublevel bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorSpec {
    kind: GeneratorKind,
    gamma: f64,
    lambda0: f64,
    constraint: Constraint,
    alpha_minus: f64,
    alpha_plus: f64,
    /// `None` stands for `-∞`.
    ell_minus: Option<f64>,
    /// `None` stands for `+∞`.
    ell_plus: Option<f64>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, gamma: f64, lambda0: f64, constraint: Constraint) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Invalid(format!("gamma must be positive, got {gamma}")));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::Invalid(format!("lambda0 must be positive, got {lambda0}")));
        }
        validate_kind(&kind, constraint)?;
        let mut g = GeneratorSpec {
            kind,
            gamma,
            lambda0,
            constraint,
            alpha_minus: 0.0,
            alpha_plus: 0.0,
            ell_minus: None,
            ell_plus: None,
        };
        let (am, ap) = g.compute_alpha()?;
        g.alpha_minus = am;
        g.alpha_plus = ap;
        let d0 = g.psi_d1_raw(0.0);
        g.ell_minus = match constraint {
            Constraint::Nonneg => None,
            Constraint::Reals => Some(g.psi_d1_raw(am) - d0),
        };
        g.ell_plus = match kind {
            // ψ'(0) = -∞, so the right slope at zero is unbounded.
            GeneratorKind::Shannon => None,
            _ => Some(g.psi_d1_raw(ap) - d0),
        };
        Ok(g)
    }

    pub fn power(p: f64, gamma: f64, lambda0: f64, constraint: Constraint) -> Result<Self> {
        Self::new(GeneratorKind::Power { p }, gamma, lambda0, constraint)
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    /// `(α⁻, α⁺)`, the λ0-sublevel set of `d_ψ(0, ·)`.
    pub fn alpha_bounds(&self) -> (f64, f64) {
        (self.alpha_minus, self.alpha_plus)
    }

    /// `(ℓ⁻, ℓ⁺)`, the subdifferential of β at zero; `None` marks an infinite end.
    pub fn ell_bounds(&self) -> (Option<f64>, Option<f64>) {
        (self.ell_minus, self.ell_plus)
    }

    /// Distance from `v` to `[ℓ⁻, ℓ⁺]`.
    pub fn ell_violation(&self, v: f64) -> f64 {
        let below = self.ell_minus.map_or(0.0, |lo| (lo - v).max(0.0));
        let above = self.ell_plus.map_or(0.0, |hi| (v - hi).max(0.0));
        below.max(above)
    }

    pub fn psi_value(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.psi_raw(x))
    }

    /// `ψ'(x)`; for Shannon at `x = 0` this is `-∞`.
    pub fn psi_d1(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.psi_d1_raw(x))
    }

    /// `ψ''(x)`; `+∞` at zero for Shannon and for powers `p < 2`.
    pub fn psi_d2(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.psi_d2_raw(x))
    }

    /// `d_ψ(x, z) = ψ(x) - ψ(z) - ψ'(z)(x - z)`.
    pub fn bregman_d(&self, x: f64, z: f64) -> Result<f64> {
        self.check_domain(x)?;
        self.check_domain(z)?;
        if x == z {
            return Ok(0.0);
        }
        if z == 0.0 {
            if let GeneratorKind::Shannon = self.kind {
                return Ok(f64::INFINITY);
            }
        }
        if x == 0.0 {
            return Ok(self.d_from_zero(z));
        }
        let d = self.psi_raw(x) - self.psi_raw(z) - self.psi_d1_raw(z) * (x - z);
        Ok(d.max(0.0))
    }

    /// One-dimensional B-rex penalty `β_ψ(x)`; `+∞` outside the constraint set.
    pub fn beta_value(&self, x: f64) -> f64 {
        if !self.constraint.contains(x) {
            return f64::INFINITY;
        }
        if x == 0.0 {
            return 0.0;
        }
        if x >= self.alpha_plus || x <= self.alpha_minus {
            return self.lambda0;
        }
        let alpha = if x > 0.0 { self.alpha_plus } else { self.alpha_minus };
        let v = self.psi_raw(0.0) - self.psi_raw(x) + self.psi_d1_raw(alpha) * x;
        v.clamp(0.0, self.lambda0)
    }

    /// Derivative of β on `(α⁻, 0) ∪ (0, α⁺)`; zero outside `[α⁻, α⁺]`.
    pub fn beta_d1(&self, x: f64) -> f64 {
        if x >= self.alpha_plus || x <= self.alpha_minus || x == 0.0 {
            return 0.0;
        }
        let alpha = if x > 0.0 { self.alpha_plus } else { self.alpha_minus };
        self.psi_d1_raw(alpha) - self.psi_d1_raw(x)
    }

    /// Whether `x` lies in the open set `(α⁻, α⁺) \ {0}` where β is nonlinear.
    pub fn in_open_interval(&self, x: f64) -> bool {
        x != 0.0 && x > self.alpha_minus && x < self.alpha_plus
    }

    /// `inf ψ''` over `(α⁻, α⁺) \ {0}`.
    pub fn inf_psi_d2(&self) -> f64 {
        let ap = self.alpha_plus;
        let am = self.alpha_minus;
        match self.kind {
            GeneratorKind::Power { p } => {
                let r = ap.max(-am);
                if p == 2.0 {
                    self.gamma
                } else {
                    self.gamma * r.powf(p - 2.0)
                }
            }
            GeneratorKind::Shannon => self.gamma / ap,
            GeneratorKind::Kl { y, b } => self.gamma * y / ((ap + b) * (ap + b)),
            GeneratorKind::FidelityMatched { .. } => {
                numeric_extremum(|t| self.psi_d2_raw(t), am, ap, false)
            }
        }
    }

    /// `sup ψ''` over `(α⁻, α⁺) \ {0}`; `+∞` when ψ'' blows up at zero.
    pub fn sup_psi_d2(&self) -> f64 {
        match self.kind {
            GeneratorKind::Power { p } => {
                if p == 2.0 {
                    self.gamma
                } else {
                    f64::INFINITY
                }
            }
            GeneratorKind::Shannon => f64::INFINITY,
            GeneratorKind::Kl { y, b } => self.gamma * y / (b * b),
            GeneratorKind::FidelityMatched { .. } => {
                numeric_extremum(|t| self.psi_d2_raw(t), self.alpha_minus, self.alpha_plus, true)
            }
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if !self.constraint.contains(x) {
            return Err(Error::Domain(format!("{x} is outside the constraint set")));
        }
        if let GeneratorKind::Kl { b, .. } = self.kind {
            if x + b <= 0.0 {
                return Err(Error::Domain(format!("x + b = {} is not positive", x + b)));
            }
        }
        Ok(())
    }

    pub(crate) fn psi_raw(&self, x: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            GeneratorKind::Power { p } => g * x.abs().powf(p) / (p * (p - 1.0)),
            GeneratorKind::Shannon => {
                if x == 0.0 {
                    g
                } else {
                    g * (x * x.ln() - x + 1.0)
                }
            }
            GeneratorKind::Kl { y, b } => g * (x + b - y * (x + b).ln()),
            GeneratorKind::FidelityMatched { fidelity, a, y, b, lambda2 } => {
                let f = fidelity::f_value(fidelity, a * x, y, b).unwrap_or(f64::INFINITY);
                g * (f + 0.5 * lambda2 * x * x)
            }
        }
    }

    pub(crate) fn psi_d1_raw(&self, x: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            GeneratorKind::Power { p } => {
                if p == 2.0 {
                    g * x
                } else {
                    g * x.signum() * x.abs().powf(p - 1.0) / (p - 1.0)
                }
            }
            GeneratorKind::Shannon => {
                if x == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    g * x.ln()
                }
            }
            GeneratorKind::Kl { y, b } => g * (1.0 - y / (x + b)),
            GeneratorKind::FidelityMatched { fidelity, a, y, b, lambda2 } => {
                let f1 = fidelity::f_d1(fidelity, a * x, y, b).unwrap_or(f64::NAN);
                g * (a * f1 + lambda2 * x)
            }
        }
    }

    pub(crate) fn psi_d2_raw(&self, x: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            GeneratorKind::Power { p } => {
                if p == 2.0 {
                    g
                } else {
                    g * x.abs().powf(p - 2.0)
                }
            }
            GeneratorKind::Shannon => g / x,
            GeneratorKind::Kl { y, b } => g * y / ((x + b) * (x + b)),
            GeneratorKind::FidelityMatched { fidelity, a, y, b, lambda2 } => {
                let f2 = fidelity::f_d2(fidelity, a * x, y, b).unwrap_or(f64::NAN);
                g * (a * a * f2 + lambda2)
            }
        }
    }

    /// `d_ψ(0, z)`, in closed form where one exists.
    pub(crate) fn d_from_zero(&self, z: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            GeneratorKind::Power { p } => g * z.abs().powf(p) / p,
            GeneratorKind::Shannon => g * z,
            GeneratorKind::Kl { y, b } => g * y * ((z / b).ln_1p() - z / (z + b)),
            GeneratorKind::FidelityMatched { .. } => {
                let d = self.psi_raw(0.0) - self.psi_raw(z) + self.psi_d1_raw(z) * z;
                d.max(0.0)
            }
        }
    }

    fn compute_alpha(&self) -> Result<(f64, f64)> {
        let l0 = self.lambda0;
        let g = self.gamma;
        let nonneg = self.constraint == Constraint::Nonneg;
        match self.kind {
            GeneratorKind::Power { p } => {
                let a = (p * l0 / g).powf(1.0 / p);
                Ok((if nonneg { 0.0 } else { -a }, a))
            }
            GeneratorKind::Shannon => Ok((0.0, l0 / g)),
            GeneratorKind::Kl { y, b } => {
                // -b e^{-κ} = -exp(-1 - λ0/(yγ))
                let w = lambert_w_neg_exp(Branch::Principal, -1.0 - l0 / (y * g))?;
                let mut a = -b / w - b;
                // A few Newton steps on d(0, z) = λ0 with d' = ψ''(z) z recover the digits
                // lost in the subtraction above.
                for _ in 0..4 {
                    let r = self.d_from_zero(a) - l0;
                    let dr = self.psi_d2_raw(a) * a;
                    if dr <= 0.0 || !dr.is_finite() {
                        break;
                    }
                    let next = a - r / dr;
                    if next > 0.0 && (self.d_from_zero(next) - l0).abs() <= r.abs() {
                        a = next;
                    } else {
                        break;
                    }
                }
                Ok((0.0, a))
            }
            GeneratorKind::FidelityMatched { .. } => {
                let ap = self.sublevel_root(1.0)?;
                let am = if nonneg { 0.0 } else { -self.sublevel_root(-1.0)? };
                Ok((am, ap))
            }
        }
    }

    /// Positive `t` with `d(0, sign·t) = λ0`, by bracketing and bisection.
    fn sublevel_root(&self, sign: f64) -> Result<f64> {
        let l0 = self.lambda0;
        let h = |t: f64| self.d_from_zero(sign * t) - l0;
        let mut hi = 1.0_f64.min(l0 / self.gamma);
        let mut lo = 0.0;
        let mut found = false;
        for _ in 0..BRACKET_DOUBLINGS {
            if h(hi) > 0.0 {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if !found {
            return Err(Error::Convergence(
                "could not bracket the lambda0-sublevel bound; the generator is not coercive".into(),
            ));
        }
        let tol = ROOT_TOL * l0.max(1.0);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            let v = h(mid);
            if v.abs() <= tol || hi - lo <= f64::EPSILON * hi {
                lo = mid;
                hi = mid;
                break;
            }
            if v > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn validate_kind(kind: &GeneratorKind, constraint: Constraint) -> Result<()> {
    match *kind {
        GeneratorKind::Power { p } => {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::Invalid(format!("power exponent must lie in (1, 2], got {p}")));
            }
        }
        GeneratorKind::Shannon => {
            if constraint != Constraint::Nonneg {
                return Err(Error::UnsupportedPairing(
                    "the Shannon generator requires the nonnegative constraint".into(),
                ));
            }
        }
        GeneratorKind::Kl { y, b } => {
            if constraint != Constraint::Nonneg {
                return Err(Error::UnsupportedPairing(
                    "the KL generator requires the nonnegative constraint".into(),
                ));
            }
            if !(y > 0.0 && b > 0.0 && y.is_finite() && b.is_finite()) {
                return Err(Error::Invalid("the KL generator needs y > 0 and b > 0".into()));
            }
        }
        GeneratorKind::FidelityMatched { fidelity, a, y, b, lambda2 } => {
            if a == 0.0 || !a.is_finite() {
                return Err(Error::Invalid("fidelity-matched generator needs a nonzero scale".into()));
            }
            if !(lambda2 >= 0.0) {
                return Err(Error::Invalid("lambda2 must be nonnegative".into()));
            }
            match fidelity {
                FidelityKind::LeastSquares => {}
                FidelityKind::Logistic => {
                    if y != 0.0 && y != 1.0 {
                        return Err(Error::Invalid("logistic labels must be 0 or 1".into()));
                    }
                }
                FidelityKind::KullbackLeibler => {
                    if constraint != Constraint::Nonneg || a < 0.0 || !(y > 0.0) || !(b > 0.0) {
                        return Err(Error::Invalid(
                            "KL-matched generator needs a > 0, y > 0, b > 0 on the nonnegative constraint"
                                .into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Infimum (or supremum) of `f` over `[lo, 0) ∪ (0, hi]` from a grid plus golden refinement.
fn numeric_extremum(f: impl Fn(f64) -> f64, lo: f64, hi: f64, maximize: bool) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let obj = |t: f64| sign * f(t);
    let mut best = f64::INFINITY;
    let mut refine = |a: f64, b: f64| {
        if b <= a {
            return;
        }
        const CELLS: usize = 512;
        let step = (b - a) / CELLS as f64;
        let mut arg = a;
        let mut val = f64::INFINITY;
        for i in 0..=CELLS {
            let t = a + step * i as f64;
            let t = if t == 0.0 { if i == 0 { step * 1e-9 } else { -step * 1e-9 } } else { t };
            let v = obj(t);
            if v < val {
                val = v;
                arg = t;
            }
        }
        let (mut l, mut r) = ((arg - step).max(a), (arg + step).min(b));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = r - phi * (r - l);
            let d = l + phi * (r - l);
            if obj(c) < obj(d) {
                r = d;
            } else {
                l = c;
            }
        }
        val = val.min(obj(0.5 * (l + r)));
        best = best.min(val);
    };
    if lo < 0.0 {
        refine(lo, 0.0);
    }
    if hi > 0.0 {
        refine(0.0, hi);
    }
    sign * best
}

/// Penalty applied to one coordinate of a relaxation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "penalty", rename_all = "snake_case")]
pub enum CoordPenalty {
    Brex(GeneratorSpec),
    /// Plain `λ0 |x|_0`, used for coordinates whose column of `A` is zero.
    L0,
}

/// Separable relaxation `B_Ψ(x) = Σ β_n(x_n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Relaxation {
    pub lambda0: f64,
    pub constraint: Constraint,
    pub coords: Vec<CoordPenalty>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<CalibrationReport>,
}

impl Relaxation {
    pub fn new(lambda0: f64, constraint: Constraint, coords: Vec<CoordPenalty>) -> Self {
        Relaxation { lambda0, constraint, coords, report: None }
    }

    /// Same generator on every coordinate.
    pub fn uniform(g: GeneratorSpec, n: usize) -> Self {
        Relaxation::new(g.lambda0(), g.constraint(), vec![CoordPenalty::Brex(g); n])
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn generator(&self, n: usize) -> Option<&GeneratorSpec> {
        match &self.coords[n] {
            CoordPenalty::Brex(g) => Some(g),
            CoordPenalty::L0 => None,
        }
    }

    pub fn coord_value(&self, n: usize, x: f64) -> f64 {
        match &self.coords[n] {
            CoordPenalty::Brex(g) => g.beta_value(x),
            CoordPenalty::L0 => {
                if !self.constraint.contains(x) {
                    f64::INFINITY
                } else if x == 0.0 {
                    0.0
                } else {
                    self.lambda0
                }
            }
        }
    }

    /// `B_Ψ(x)`.
    pub fn brex_value(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(n, &v)| self.coord_value(n, v)).sum()
    }

    /// Whether every coordinate satisfies its exactness threshold.
    pub fn is_exact(&self) -> bool {
        self.report.as_ref().is_none_or(|r| r.exact.iter().all(|&e| e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn shannon(gamma: f64, lambda0: f64) -> GeneratorSpec {
        GeneratorSpec::new(GeneratorKind::Shannon, gamma, lambda0, Constraint::Nonneg).unwrap()
    }

    fn klgen(gamma: f64, lambda0: f64) -> GeneratorSpec {
        GeneratorSpec::new(GeneratorKind::Kl { y: 1.0, b: 0.1 }, gamma, lambda0, Constraint::Nonneg)
            .unwrap()
    }

    fn all_kinds() -> Vec<GeneratorSpec> {
        let mut v = vec![
            GeneratorSpec::power(2.0, 1.3, 0.5, Constraint::Reals).unwrap(),
            GeneratorSpec::power(1.5, 0.8, 0.4, Constraint::Reals).unwrap(),
            GeneratorSpec::power(4.0 / 3.0, 2.0, 0.3, Constraint::Nonneg).unwrap(),
            shannon(2.0, 1.0),
            klgen(1.0, 0.1),
        ];
        for (fidelity, y, c) in [
            (FidelityKind::LeastSquares, 0.7, Constraint::Reals),
            (FidelityKind::Logistic, 1.0, Constraint::Reals),
            (FidelityKind::KullbackLeibler, 0.8, Constraint::Nonneg),
        ] {
            let kind = GeneratorKind::FidelityMatched { fidelity, a: 1.2, y, b: 0.3, lambda2: 0.2 };
            v.push(GeneratorSpec::new(kind, 1.0, 0.2, c).unwrap());
        }
        v
    }

    #[test]
    fn psi_examples() {
        let p2 = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Reals).unwrap();
        assert_relative_eq!(p2.psi_value(3.0).unwrap(), 4.5);
        assert_relative_eq!(p2.psi_d1(3.0).unwrap(), 3.0);
        assert_eq!(shannon(2.0, 1.0).psi_value(1.0).unwrap(), 0.0);
        assert_eq!(shannon(2.0, 1.0).psi_value(0.0).unwrap(), 2.0);
        assert!(klgen(1.0, 0.1).psi_d1(0.9).unwrap().abs() < 1e-15);
        assert!(shannon(1.0, 1.0).psi_value(-1.0).is_err());
    }

    #[test]
    fn bregman_examples() {
        let p2 = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Reals).unwrap();
        assert_eq!(p2.bregman_d(0.4, 0.4).unwrap(), 0.0);
        assert_relative_eq!(p2.bregman_d(0.0, 1.7).unwrap(), 1.7 * 1.7 / 2.0, max_relative = 1e-14);
        assert_relative_eq!(shannon(1.0, 1.0).bregman_d(0.0, 0.37).unwrap(), 0.37, max_relative = 1e-14);
    }

    #[test]
    fn alpha_examples() {
        let p2 = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Reals).unwrap();
        assert_eq!(p2.alpha_bounds(), (-1.0, 1.0));
        assert_eq!(shannon(2.0, 1.0).alpha_bounds(), (0.0, 0.5));
        let kl = klgen(1.0, 0.1);
        let (am, ap) = kl.alpha_bounds();
        assert_eq!(am, 0.0);
        assert!((kl.d_from_zero(ap) - 0.1).abs() < 1e-10);
        let p2n = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Nonneg).unwrap();
        assert_eq!(p2n.alpha_bounds(), (0.0, 1.0));
    }

    #[test]
    fn ell_examples() {
        let p2 = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Reals).unwrap();
        assert_eq!(p2.ell_bounds(), (Some(-1.0), Some(1.0)));
        assert_eq!(shannon(1.0, 1.0).ell_bounds(), (None, None));
        let kl = klgen(1.0, 0.1);
        let (lm, lp) = kl.ell_bounds();
        assert!(lm.is_none());
        let (_, ap) = kl.alpha_bounds();
        let expected = (1.0 - 1.0 / (ap + 0.1)) - (1.0 - 1.0 / 0.1);
        assert_relative_eq!(lp.unwrap(), expected, max_relative = 1e-12);
        assert!(lp.unwrap() > 0.0);
    }

    #[test]
    fn beta_examples() {
        for g in all_kinds() {
            assert_eq!(g.beta_value(0.0), 0.0);
            let (am, ap) = g.alpha_bounds();
            assert_eq!(g.beta_value(ap), g.lambda0());
            assert_eq!(g.beta_value(ap * 1.5 + 1.0), g.lambda0());
            if am < 0.0 {
                assert_eq!(g.beta_value(am - 0.1), g.lambda0());
            } else {
                assert_eq!(g.beta_value(-0.1), f64::INFINITY);
            }
        }
        let s = shannon(1.0, 1.0);
        assert_relative_eq!(
            s.beta_value(0.5),
            0.5 * (2f64.ln() + 1.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn sublevel_bounds_hit_lambda0() {
        for g in all_kinds() {
            let (am, ap) = g.alpha_bounds();
            assert!((g.d_from_zero(ap) - g.lambda0()).abs() < 1e-10, "{:?}", g.kind());
            if am < 0.0 {
                assert!((g.d_from_zero(am) - g.lambda0()).abs() < 1e-10, "{:?}", g.kind());
            }
            let (lm, lp) = g.ell_bounds();
            assert!(lm.is_none_or(|v| v <= 0.0));
            assert!(lp.is_none_or(|v| v >= 0.0));
        }
    }

    #[test]
    fn matched_ls_alpha_closed_form() {
        let kind = GeneratorKind::FidelityMatched {
            fidelity: FidelityKind::LeastSquares,
            a: 2.0,
            y: 0.3,
            b: 0.0,
            lambda2: 0.5,
        };
        let g = GeneratorSpec::new(kind, 1.0, 0.7, Constraint::Reals).unwrap();
        let want = (2.0 * 0.7 / 4.5f64).sqrt();
        let (am, ap) = g.alpha_bounds();
        assert_relative_eq!(ap, want, max_relative = 1e-10);
        assert_relative_eq!(am, -want, max_relative = 1e-10);
    }

    #[test]
    fn non_coercive_matched_generator_errors() {
        // Logistic without ridge: d(0, ·) saturates at log 2 on the labelled side.
        let kind = GeneratorKind::FidelityMatched {
            fidelity: FidelityKind::Logistic,
            a: 1.0,
            y: 1.0,
            b: 0.0,
            lambda2: 0.0,
        };
        assert!(matches!(
            GeneratorSpec::new(kind, 1.0, 5.0, Constraint::Reals),
            Err(Error::Convergence(_))
        ));
    }

    #[test]
    fn invalid_generators() {
        assert!(GeneratorSpec::power(2.5, 1.0, 1.0, Constraint::Reals).is_err());
        assert!(GeneratorSpec::power(1.0, 1.0, 1.0, Constraint::Reals).is_err());
        assert!(GeneratorSpec::new(GeneratorKind::Shannon, 1.0, 1.0, Constraint::Reals).is_err());
        assert!(GeneratorSpec::power(2.0, 0.0, 1.0, Constraint::Reals).is_err());
    }

    #[test]
    fn curvature_extrema() {
        let p = GeneratorSpec::power(1.5, 2.0, 0.5, Constraint::Reals).unwrap();
        let (_, ap) = p.alpha_bounds();
        assert_relative_eq!(p.inf_psi_d2(), 2.0 / ap.sqrt(), max_relative = 1e-14);
        let s = shannon(2.0, 0.5);
        assert_relative_eq!(s.inf_psi_d2(), 4.0 / 0.5, max_relative = 1e-14);
        let kind = GeneratorKind::FidelityMatched {
            fidelity: FidelityKind::LeastSquares,
            a: 2.0,
            y: 0.0,
            b: 0.0,
            lambda2: 0.5,
        };
        let m = GeneratorSpec::new(kind, 1.0, 0.7, Constraint::Reals).unwrap();
        assert_relative_eq!(m.inf_psi_d2(), 4.5, max_relative = 1e-12);
        assert_relative_eq!(m.sup_psi_d2(), 4.5, max_relative = 1e-12);
    }

    #[test]
    fn relaxation_sums_coordinates() {
        let g = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Reals).unwrap();
        let r = Relaxation::uniform(g.clone(), 3);
        assert_eq!(r.brex_value(&[0.0, 0.0, 0.0]), 0.0);
        assert_relative_eq!(r.brex_value(&[2.0, -3.0, 1.0]), 1.5);
        let mixed = r.brex_value(&[0.3, 0.0, -2.0]);
        assert_relative_eq!(mixed, g.beta_value(0.3) + 0.5);
        let r0 = Relaxation::new(0.5, Constraint::Reals, vec![CoordPenalty::L0, CoordPenalty::Brex(g)]);
        assert_relative_eq!(r0.brex_value(&[1e-9, 0.0]), 0.5);
    }

    fn generator_strategy() -> impl Strategy<Value = GeneratorSpec> {
        (0usize..8, 0.2f64..5.0, 0.05f64..2.0).prop_map(|(k, gamma, lambda0)| {
            let kind = match k {
                0 => GeneratorKind::Power { p: 2.0 },
                1 => GeneratorKind::Power { p: 1.5 },
                2 => GeneratorKind::Power { p: 4.0 / 3.0 },
                3 => GeneratorKind::Shannon,
                4 => GeneratorKind::Kl { y: 1.0, b: 0.3 },
                5 => GeneratorKind::FidelityMatched {
                    fidelity: FidelityKind::LeastSquares,
                    a: 1.1,
                    y: 0.5,
                    b: 0.0,
                    lambda2: 0.1,
                },
                6 => GeneratorKind::FidelityMatched {
                    fidelity: FidelityKind::Logistic,
                    a: -0.9,
                    y: 0.0,
                    b: 0.0,
                    lambda2: 0.3,
                },
                _ => GeneratorKind::FidelityMatched {
                    fidelity: FidelityKind::KullbackLeibler,
                    a: 0.8,
                    y: 1.5,
                    b: 0.2,
                    lambda2: 0.0,
                },
            };
            let c = match kind {
                GeneratorKind::Power { .. } if k == 0 => Constraint::Reals,
                GeneratorKind::Shannon | GeneratorKind::Kl { .. } => Constraint::Nonneg,
                GeneratorKind::FidelityMatched { fidelity: FidelityKind::KullbackLeibler, .. } => {
                    Constraint::Nonneg
                }
                _ => Constraint::Reals,
            };
            GeneratorSpec::new(kind, gamma, lambda0, c).unwrap()
        })
    }

    proptest! {
        #[test]
        fn beta_minorizes_l0(g in generator_strategy(), s in -1.5f64..1.5) {
            let (am, ap) = g.alpha_bounds();
            let x = if s >= 0.0 { s * ap } else { -s * am };
            let b = g.beta_value(x);
            prop_assert!(b >= 0.0);
            let bound = if x != 0.0 { g.lambda0() } else { 0.0 };
            prop_assert!(b <= bound);
        }

        #[test]
        fn beta_concave_on_each_side(g in generator_strategy(), u in 0.0f64..1.0, v in 0.0f64..1.0, neg in any::<bool>()) {
            let (am, ap) = g.alpha_bounds();
            let end = if neg && am < 0.0 { am } else { ap };
            let (a, b) = (u * end, v * end);
            let mid = g.beta_value(0.5 * (a + b));
            let avg = 0.5 * (g.beta_value(a) + g.beta_value(b));
            prop_assert!(mid >= avg - 1e-12 * g.lambda0());
        }

        #[test]
        fn beta_continuous(g in generator_strategy(), s in 0.01f64..1.4) {
            let (_, ap) = g.alpha_bounds();
            let x = s * ap;
            let jumps: Vec<f64> = (4..12)
                .map(|k| {
                    let h = 10f64.powi(-k) * ap;
                    (g.beta_value(x + h) - g.beta_value(x - h)).abs()
                })
                .collect();
            prop_assert!(jumps[jumps.len() - 1] < 1e-8 * g.lambda0().max(1.0), "{:?}", jumps);
        }

        #[test]
        fn derivatives_match_finite_differences(g in generator_strategy(), s in 0.05f64..2.0, neg in any::<bool>()) {
            let (am, ap) = g.alpha_bounds();
            let x = if neg && am < 0.0 { s * am } else { s * ap };
            let h = 1e-6 * x.abs().max(1e-3);
            let fd1 = (g.psi_raw(x + h) - g.psi_raw(x - h)) / (2.0 * h);
            let d1 = g.psi_d1_raw(x);
            prop_assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(g.gamma()));
            let fd2 = (g.psi_d1_raw(x + h) - g.psi_d1_raw(x - h)) / (2.0 * h);
            let d2 = g.psi_d2_raw(x);
            prop_assert!((fd2 - d2).abs() <= 1e-5 * d2.abs().max(g.gamma()));
        }
    }
}
