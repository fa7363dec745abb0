//! Exponential integral E1 and its inverse, used by the shot-noise
//! representation of the Gamma random measure (the Levy tail integral of
//! the Gamma basis is proportional to E1).

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// E1(x) = int_x^inf e^{-u}/u du for x > 0.
///
/// Power series for x <= 1, modified-Lentz continued fraction beyond.
pub fn e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires a positive argument, got {x}");
    if x <= 1.0 {
        // -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..=40 {
            term *= -x / k as f64;
            let contrib = -term / k as f64;
            sum += contrib;
            if contrib.abs() < 1e-18 * (1.0 + sum.abs()) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // e^{-x} * CF, CF = 1/(x+1- 1/(x+3- 4/(x+5- 9/(...))))
        let mut b = x + 1.0;
        let mut c = 1e308;
        let mut d = 1.0 / b;
        let mut h = d;
        for k in 1..=120u32 {
            let a = -(k as f64) * (k as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Solves `e1(z) = target` for `z > 0` (E1 is strictly decreasing).
/// Newton iteration with a bisection bracket fallback.
pub fn e1_inv(target: f64) -> f64 {
    assert!(target > 0.0 && target.is_finite(), "target must be positive, got {target}");
    // Initial guess from the asymptotic branches.
    let mut z = if target > 0.6 {
        // small-z branch: E1(z) ~ -gamma - ln z
        (-EULER_GAMMA - target).exp()
    } else {
        // large-z branch: E1(z) ~ e^{-z}/z; two fixed-point refinements
        let mut g: f64 = -target.ln().min(-1e-10);
        g = (g.max(1e-10) * target).recip().ln().max(1e-3);
        if !g.is_finite() || g <= 0.0 {
            g = 1.0;
        }
        g
    };
    if !z.is_finite() || z <= 0.0 {
        z = 1.0;
    }

    // Expand a bracket around the guess.
    let (mut lo, mut hi) = (z, z);
    for _ in 0..200 {
        if e1(lo) >= target {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..200 {
        if e1(hi) <= target {
            break;
        }
        hi *= 2.0;
    }
    debug_assert!(e1(lo) >= target && e1(hi) <= target);

    let mut z = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = e1(z) - target;
        if f > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        // E1'(z) = -e^{-z}/z
        let deriv = -(-z).exp() / z;
        let step = f / deriv;
        let mut next = z - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 1e-15 * z.max(1e-300) {
            return next;
        }
        z = next;
    }
    z
}
