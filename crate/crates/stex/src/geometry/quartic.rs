//! Real roots of low-degree polynomials via companion-matrix eigenvalues.

use nalgebra::{Complex, Matrix3, Matrix4};

/// Tolerance for trimming vanishing leading coefficients, relative to the
/// largest coefficient magnitude.
const LEAD_TOL: f64 = 1e-12;

/// Eigenvalues with |Im| above this (relative) are discarded as complex.
/// Deliberately loose: near-tangent intersections produce conjugate pairs
/// with |Im| ~ sqrt(eps), and candidates are verified against both conics
/// downstream.
const IM_TOL: f64 = 1e-6;

/// Real roots of `c[0] x^n + c[1] x^(n-1) + ... + c[n]`, multiplicities kept.
///
/// Returns `None` when the polynomial is identically zero (relative to the
/// largest coefficient magnitude of the input slice).
pub fn real_roots(coeffs: &[f64]) -> Option<Vec<f64>> {
    let max_c = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max_c < LEAD_TOL {
        return None;
    }
    // Trim vanished leading coefficients (degree degradation).
    let mut start = 0;
    while start < coeffs.len() && coeffs[start].abs() < LEAD_TOL * max_c {
        start += 1;
    }
    let c = &coeffs[start..];
    if c.len() <= 1 {
        return Some(Vec::new()); // nonzero constant
    }

    let mut roots = match c.len() {
        2 => vec![-c[1] / c[0]],
        3 => quadratic_roots(c[0], c[1], c[2]),
        4 => companion3(c),
        5 => companion4(c),
        _ => unreachable!("degree > 4 not produced by conic intersection"),
    };
    for r in roots.iter_mut() {
        *r = polish(c, *r);
    }
    Some(roots)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    // Keep slightly negative discriminants: tangencies show up as tiny
    // negative values and are verified downstream.
    if disc < -IM_TOL * (b * b + 4.0 * (a * c).abs() + 1.0) {
        return Vec::new();
    }
    let sd = disc.max(0.0).sqrt();
    let q = -0.5 * (b + b.signum() * sd);
    let mut out = Vec::with_capacity(2);
    if q.abs() > 0.0 {
        out.push(q / a);
        out.push(c / q);
    } else {
        // b == 0: symmetric pair
        out.push(sd / (2.0 * a));
        out.push(-sd / (2.0 * a));
    }
    out
}

fn keep_real(eigs: impl IntoIterator<Item = Complex<f64>>) -> Vec<f64> {
    eigs.into_iter()
        .filter(|z| z.im.abs() <= IM_TOL * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect()
}

fn companion3(c: &[f64]) -> Vec<f64> {
    let a = [c[1] / c[0], c[2] / c[0], c[3] / c[0]];
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0, 0.0, -a[2],
        1.0, 0.0, -a[1],
        0.0, 1.0, -a[0],
    );
    keep_real(m.complex_eigenvalues().iter().copied())
}

fn companion4(c: &[f64]) -> Vec<f64> {
    let a = [c[1] / c[0], c[2] / c[0], c[3] / c[0], c[4] / c[0]];
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0, 0.0, 0.0, -a[3],
        1.0, 0.0, 0.0, -a[2],
        0.0, 1.0, 0.0, -a[1],
        0.0, 0.0, 1.0, -a[0],
    );
    keep_real(m.complex_eigenvalues().iter().copied())
}

/// A couple of guarded Newton steps on the polynomial itself.
fn polish(c: &[f64], x0: f64) -> f64 {
    let eval = |x: f64| -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &ci in c {
            dp = dp * x + p;
            p = p * x + ci;
        }
        (p, dp)
    };
    let mut x = x0;
    for _ in 0..3 {
        let (p, dp) = eval(x);
        if dp.abs() < 1e-300 {
            break;
        }
        let step = p / dp;
        if !step.is_finite() || step.abs() > 0.5 * (1.0 + x.abs()) {
            break; // near-multiple root; keep the eigenvalue estimate
        }
        x -= step;
    }
    x
}
