//! Real roots of cubic polynomials.

use std::f64::consts::PI;

/// All distinct real roots of `a3 z³ + a2 z² + a1 z + a0`, sorted ascending.
///
/// Uses the trigonometric form when three real roots exist and Cardano's formula otherwise,
/// followed by a Newton polish on the original polynomial. Returns an empty vector when
/// `a3 == 0`.
pub fn cubic_real_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    if a3 == 0.0 || !a3.is_finite() {
        return Vec::new();
    }
    let b = a2 / a3;
    let c = a1 / a3;
    let d = a0 / a3;
    // z = t - b/3 gives t³ + p t + q = 0.
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;

    let mut roots: Vec<f64> = Vec::with_capacity(3);
    if p == 0.0 {
        roots.push((-q).cbrt());
    } else {
        let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
        if disc > 0.0 {
            // One real root; pick the cube root that avoids cancellation.
            let s = disc.sqrt();
            let u = (-q / 2.0 - q.signum() * s).cbrt();
            let u = if u == 0.0 { (-q / 2.0 + s).cbrt() } else { u };
            roots.push(u - p / (3.0 * u));
        } else {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            for k in 0..3 {
                roots.push(m * (theta - 2.0 * PI * k as f64 / 3.0).cos());
            }
        }
    }

    let poly = |z: f64| ((z + b) * z + c) * z + d;
    let dpoly = |z: f64| (3.0 * z + 2.0 * b) * z + c;
    let mut out: Vec<f64> = roots
        .into_iter()
        .map(|t| {
            let mut z = t - shift;
            for _ in 0..3 {
                let f = poly(z);
                let df = dpoly(z);
                if df == 0.0 || f == 0.0 {
                    break;
                }
                let cand = z - f / df;
                if cand.is_finite() && poly(cand).abs() < f.abs() {
                    z = cand;
                } else {
                    break;
                }
            }
            z
        })
        .collect();
    out.sort_by(f64::total_cmp);
    let scale = out.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-10 * scale);
    out
}
