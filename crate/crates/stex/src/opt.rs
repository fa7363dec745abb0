//! Derivative-free simplex minimization (Nelder–Mead).
//!
//! Used for pairwise-likelihood maximization over a log/logit-reparameterized
//! unconstrained space and for per-site generalized-Pareto fits. Objectives
//! return `None` for rejected parameter regions; such points are treated as
//! worse than any evaluated point.

/// Classic Nelder–Mead coefficients.
const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Per-coordinate initial simplex displacement.
    pub steps: Vec<f64>,
    /// Maximum number of objective evaluations.
    pub max_eval: usize,
    /// Stop when the simplex f-spread falls below `ftol_rel * (1 + |f_best|)`.
    pub ftol_rel: f64,
    /// Stop when the simplex max coordinate spread falls below this.
    pub xtol_abs: f64,
}

impl SimplexOptions {
    pub fn new(steps: Vec<f64>) -> Self {
        SimplexOptions {
            steps,
            max_eval: 4000,
            ftol_rel: 1e-10,
            xtol_abs: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_eval: usize,
    pub converged: bool,
    /// Best objective value after each accepted iteration.
    pub trace: Vec<f64>,
}

/// Minimizes `f` starting from `x0`. Points where `f` returns `None` are
/// rejected (treated as +inf); the start point itself must be admissible.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> Option<SimplexResult>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let n = x0.len();
    assert!(n > 0, "empty parameter vector");
    assert_eq!(opts.steps.len(), n, "step vector dimension mismatch");

    let mut n_eval = 0usize;
    let mut eval = |x: &[f64], n_eval: &mut usize| -> f64 {
        *n_eval += 1;
        f(x).unwrap_or(f64::INFINITY)
    };

    // Initial simplex: x0 plus one displaced vertex per coordinate.
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.steps[i];
        verts.push(v);
    }
    let mut fvals: Vec<f64> = verts.iter().map(|v| eval(v, &mut n_eval)).collect();
    if !fvals[0].is_finite() {
        return None; // inadmissible start
    }

    let mut trace = Vec::new();
    let mut converged = false;

    while n_eval < opts.max_eval {
        // Order vertices by objective value.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        trace.push(fvals[best]);

        let f_spread = fvals[worst] - fvals[best];
        let x_spread = (0..n)
            .map(|i| {
                let lo = verts.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                let hi = verts.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0f64, f64::max);
        if (f_spread.is_finite() && f_spread <= opts.ftol_rel * (1.0 + fvals[best].abs()))
            || x_spread <= opts.xtol_abs
        {
            converged = true;
            break;
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; n];
        for (k, v) in verts.iter().enumerate() {
            if k == worst {
                continue;
            }
            for i in 0..n {
                centroid[i] += v[i];
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(&ai, &bi)| ai + t * (bi - ai)).collect()
        };

        // Reflection.
        let xr = blend(&centroid, &verts[worst], -REFLECT);
        let fr = eval(&xr, &mut n_eval);

        if fr < fvals[best] {
            // Expansion.
            let xe = blend(&centroid, &verts[worst], -EXPAND);
            let fe = eval(&xe, &mut n_eval);
            if fe < fr {
                verts[worst] = xe;
                fvals[worst] = fe;
            } else {
                verts[worst] = xr;
                fvals[worst] = fr;
            }
        } else if fr < fvals[second_worst] {
            verts[worst] = xr;
            fvals[worst] = fr;
        } else {
            // Contraction (outside if the reflected point improved on the worst).
            let (xc, fc) = if fr < fvals[worst] {
                let xc = blend(&centroid, &xr, CONTRACT);
                let fc = eval(&xc, &mut n_eval);
                (xc, fc)
            } else {
                let xc = blend(&centroid, &verts[worst], CONTRACT);
                let fc = eval(&xc, &mut n_eval);
                (xc, fc)
            };
            if fc < fvals[worst].min(fr) {
                verts[worst] = xc;
                fvals[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                let xb = verts[best].clone();
                for k in 0..=n {
                    if k == best {
                        continue;
                    }
                    verts[k] = blend(&xb, &verts[k], SHRINK);
                    fvals[k] = eval(&verts[k], &mut n_eval);
                }
            }
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| fvals[a].total_cmp(&fvals[b]))
        .unwrap();
    Some(SimplexResult {
        x: verts[best].clone(),
        f: fvals[best],
        n_eval,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| Some((x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2));
        let res = nelder_mead(f, &[0.0, 0.0], &SimplexOptions::new(vec![0.5, 0.5])).unwrap();
        assert!(res.converged);
        assert!((res.x[0] - 3.0).abs() < 1e-5);
        assert!((res.x[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            Some((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        };
        let mut opts = SimplexOptions::new(vec![0.1, 0.1]);
        opts.max_eval = 20_000;
        let res = nelder_mead(f, &[-1.2, 1.0], &opts).unwrap();
        assert!(res.f < 1e-8, "f = {}", res.f);
        assert!((res.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejected_regions_are_avoided() {
        // Minimum of (x-2)^2 restricted to x <= 1 is at x = 1.
        let f = |x: &[f64]| {
            if x[0] > 1.0 {
                None
            } else {
                Some((x[0] - 2.0).powi(2))
            }
        };
        let res = nelder_mead(f, &[0.0], &SimplexOptions::new(vec![0.2])).unwrap();
        assert!(res.x[0] <= 1.0 + 1e-9);
        assert!((res.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn inadmissible_start_is_none() {
        let f = |_: &[f64]| None;
        assert!(nelder_mead(f, &[0.0], &SimplexOptions::new(vec![0.1])).is_none());
    }

    #[test]
    fn trace_is_monotone_nonincreasing() {
        let f = |x: &[f64]| Some(x[0].powi(2) + x[1].powi(2));
        let res = nelder_mead(f, &[5.0, -4.0], &SimplexOptions::new(vec![1.0, 1.0])).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }
}
