//! Brute-force reference computations used to validate the closed forms.
//!
//! Nothing here calls the closed-form B-rex or prox code: β is recomputed from its sup
//! definition through Bregman distances only, and proxes by dense grid search.

use nalgebra::DVector;
use serde::Serialize;

use crate::generating::GeneratorSpec;
use crate::problem::Constraint;

const GOLDEN_ITERS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        assert!(lo < hi && points >= 3, "grid needs lo < hi and at least 3 points");
        GridSpec { lo, hi, points }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.point(i))
    }
}

/// Minimizer and minimum of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMin {
    pub arg: f64,
    pub value: f64,
}

/// Golden-section minimization of `f` on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> OracleMin {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        if b - a <= 1e-16 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
    }
    if fc <= fd {
        OracleMin { arg: c, value: fc }
    } else {
        OracleMin { arg: d, value: fd }
    }
}

/// Grid minimum of `f`, followed by golden refinement in the neighbouring cells; the extra
/// `anchors` are compared too.
pub fn grid_min(f: impl Fn(f64) -> f64, grid: &GridSpec, anchors: &[f64]) -> OracleMin {
    let mut best = OracleMin { arg: f64::NAN, value: f64::INFINITY };
    let mut best_i = 0;
    for (i, t) in grid.iter().enumerate() {
        let v = f(t);
        if v < best.value {
            best = OracleMin { arg: t, value: v };
            best_i = i;
        }
    }
    if best.value.is_finite() {
        let lo = grid.point(best_i.saturating_sub(1));
        let hi = grid.point((best_i + 1).min(grid.points - 1));
        let refined = golden_min(&f, lo, hi);
        if refined.value < best.value {
            best = refined;
        }
    }
    for &t in anchors {
        let v = f(t);
        if v < best.value {
            best = OracleMin { arg: t, value: v };
        }
    }
    best
}

fn clip_to_constraint(c: Constraint, lo: f64, hi: f64) -> (f64, f64) {
    match c {
        Constraint::Reals => (lo, hi),
        Constraint::Nonneg => (lo.max(0.0), hi.max(1e-300)),
    }
}

/// Default prox oracle grid: `[min(α⁻, x) - 1, max(α⁺, x) + 1] ∩ C` with `10⁵` points.
pub fn default_prox_grid(g: &GeneratorSpec, x: f64) -> GridSpec {
    let (am, ap) = g.alpha_bounds();
    let (lo, hi) = clip_to_constraint(g.constraint(), am.min(x) - 1.0, ap.max(x) + 1.0);
    GridSpec::new(lo, hi, 100_000)
}

/// `argmin_u β(u) + (u - x)² / (2ρ)` by grid search; `0` and `x` are always compared.
pub fn oracle_prox(g: &GeneratorSpec, rho: f64, x: f64, grid: &GridSpec) -> OracleMin {
    let obj = |u: f64| g.beta_value(u) + (u - x) * (u - x) / (2.0 * rho);
    let mut anchors = vec![0.0];
    if g.constraint().contains(x) {
        anchors.push(x);
    }
    grid_min(obj, grid, &anchors)
}

fn sup_grid(g: &GeneratorSpec, x: f64) -> GridSpec {
    let (am, ap) = g.alpha_bounds();
    let (lo, hi) = clip_to_constraint(g.constraint(), am - 1.0 - x.abs(), ap + 1.0 + x.abs());
    GridSpec::new(lo, hi, 20_001)
}

/// β(x) from its definition `sup_z min(λ0, d(0, z)) - d(x, z)`.
pub fn oracle_beta(g: &GeneratorSpec, x: f64, grid: Option<&GridSpec>) -> f64 {
    if !g.constraint().contains(x) {
        return f64::INFINITY;
    }
    let l0 = g.lambda0();
    let neg = |z: f64| -> f64 {
        let a = g.bregman_d(0.0, z);
        let b = g.bregman_d(x, z);
        match (a, b) {
            (Ok(a), Ok(b)) if b.is_finite() => -(a.min(l0) - b),
            _ => f64::INFINITY,
        }
    };
    let default = sup_grid(g, x);
    let grid = grid.unwrap_or(&default);
    let mut best = grid_min(neg, grid, &[x]);
    // A wide tail catches maximizers beyond the main window.
    let tail = GridSpec::new(grid.hi, grid.hi + 10.0 * (grid.hi - grid.lo), 2_001);
    let t = grid_min(neg, &tail, &[]);
    if t.value < best.value {
        best = t;
    }
    if g.constraint() == Constraint::Reals {
        let tail = GridSpec::new(grid.lo - 10.0 * (grid.hi - grid.lo), grid.lo, 2_001);
        let t = grid_min(neg, &tail, &[]);
        if t.value < best.value {
            best = t;
        }
    }
    -best.value
}

/// Numerical `S_Ψ(u) = sup_v -λ0 |v|_0 - d(v, u)` over a grid of `v`.
pub fn oracle_s(g: &GeneratorSpec, u: f64, v_grid: &GridSpec) -> f64 {
    let l0 = g.lambda0();
    let neg = |v: f64| -> f64 {
        let pen = if v == 0.0 { 0.0 } else { l0 };
        match g.bregman_d(v, u) {
            Ok(d) => pen + d,
            Err(_) => f64::INFINITY,
        }
    };
    -grid_min(neg, v_grid, &[0.0]).value
}

/// `(S_Ψ ∘ S_Ψ)(x) = sup_u -S_Ψ(u) - d(x, u)`, both sups taken numerically.
pub fn oracle_s_transform(g: &GeneratorSpec, u_grid: &GridSpec, x: f64) -> f64 {
    let neg = |u: f64| -> f64 {
        match g.bregman_d(x, u) {
            Ok(d) if d.is_finite() => oracle_s(g, u, u_grid) + d,
            _ => f64::INFINITY,
        }
    };
    -grid_min(neg, u_grid, &[]).value
}

/// Second differences of uniformly sampled values are all `>= -1e-9`.
pub fn oracle_convexity(values: &[f64]) -> bool {
    values.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-9)
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central-difference gradient of a function of a vector.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Outcome of one built-in consistency check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Quick oracle comparisons run by the command-line `--self-check` flag.
pub fn self_check() -> Vec<CheckOutcome> {
    use crate::generating::GeneratorKind;
    use crate::prox;

    let gens: Vec<GeneratorSpec> = vec![
        GeneratorSpec::power(2.0, 1.5, 0.5, Constraint::Reals),
        GeneratorSpec::power(1.5, 1.5, 0.5, Constraint::Reals),
        GeneratorSpec::power(4.0 / 3.0, 1.5, 0.5, Constraint::Reals),
        GeneratorSpec::new(GeneratorKind::Shannon, 1.5, 0.5, Constraint::Nonneg),
        GeneratorSpec::new(GeneratorKind::Kl { y: 1.0, b: 0.2 }, 1.5, 0.5, Constraint::Nonneg),
    ]
    .into_iter()
    .map(|g| g.expect("built-in generators are valid"))
    .collect();

    let mut out = Vec::new();
    for g in &gens {
        let (_, ap) = g.alpha_bounds();
        let mut worst_beta: f64 = 0.0;
        let mut worst_prox: f64 = 0.0;
        for i in 0..21 {
            let x = ap * (i as f64 / 10.0);
            worst_beta = worst_beta.max((g.beta_value(x) - oracle_beta(g, x, None)).abs());
            for rho in [0.2, 2.0] {
                let got = prox::prox_beta(g, rho, x).value;
                let obj = prox::prox_objective(g, rho, x, got);
                let grid = GridSpec { points: 20_000, ..default_prox_grid(g, x) };
                let oracle = oracle_prox(g, rho, x, &grid);
                worst_prox = worst_prox.max(obj - oracle.value);
            }
        }
        out.push(CheckOutcome {
            name: format!("beta {}", g.kind().label()),
            passed: worst_beta < 1e-6,
            detail: format!("max |beta - oracle| = {worst_beta:.3e}"),
        });
        out.push(CheckOutcome {
            name: format!("prox {}", g.kind().label()),
            passed: worst_prox <= 1e-8,
            detail: format!("max excess over grid oracle = {worst_prox:.3e}"),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generating::GeneratorKind;

    #[test]
    fn convexity_oracle_basics() {
        let grid = GridSpec::new(-1.0, 1.0, 101);
        let quad: Vec<f64> = grid.iter().map(|t| t * t).collect();
        assert!(oracle_convexity(&quad));
        let l0: Vec<f64> = grid.iter().map(|t| if t.abs() < 1e-12 { 0.0 } else { 1.0 }).collect();
        assert!(!oracle_convexity(&l0));
    }

    #[test]
    fn beta_oracle_matches_examples() {
        let s = GeneratorSpec::new(GeneratorKind::Shannon, 1.0, 1.0, Constraint::Nonneg).unwrap();
        let want = 0.5 * (2f64.ln() + 1.0);
        assert!((oracle_beta(&s, 0.5, None) - want).abs() < 1e-9);
        let p = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Reals).unwrap();
        assert!(oracle_beta(&p, 0.0, None).abs() < 1e-12);
        assert!((oracle_beta(&p, 1.7, None) - 0.5).abs() < 1e-9);
        assert!((oracle_beta(&p, -1.2, None) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn refining_the_grid_barely_moves_the_beta_oracle() {
        let p = GeneratorSpec::power(1.5, 1.3, 0.4, Constraint::Reals).unwrap();
        for x in [-0.3, 0.1, 0.25, 0.6] {
            let coarse = GridSpec::new(-3.0, 3.0, 2_001);
            let fine = GridSpec::new(-3.0, 3.0, 20_001);
            let a = oracle_beta(&p, x, Some(&coarse));
            let b = oracle_beta(&p, x, Some(&fine));
            assert!((a - b).abs() < 1e-7, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn s_transform_is_nonpositive_and_zero_at_zero() {
        let p = GeneratorSpec::power(2.0, 1.0, 0.5, Constraint::Reals).unwrap();
        let grid = GridSpec::new(-3.0, 3.0, 601);
        assert_eq!(oracle_s(&p, 0.0, &grid), 0.0);
        for u in grid.iter() {
            assert!(oracle_s(&p, u, &grid) <= 0.0);
        }
    }

    #[test]
    fn prox_oracle_hits_zero_for_zero_input() {
        let p = GeneratorSpec::power(1.5, 1.0, 0.5, Constraint::Reals).unwrap();
        let grid = GridSpec::new(-2.0, 2.0, 1001);
        let r = oracle_prox(&p, 0.3, 0.0, &grid);
        assert_eq!(r.arg, 0.0);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn finite_difference_helpers() {
        assert!((central_difference(|t| t * t * t, 2.0, 1e-5) - 12.0).abs() < 1e-8);
        let g = fd_gradient(|v| v[0] * v[1], &DVector::from_vec(vec![2.0, 3.0]), 1e-6);
        assert!((g[0] - 3.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    }
}
