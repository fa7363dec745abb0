use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::fit::{FitResult, ParamSpace};
use super::objective::{pairwise_loglik, pairwise_loglik_range};
use super::pairs::PairCache;
use super::ExceedancePanel;
use crate::{Error, Result};

/// Subsampling configuration: `B` overlapping temporal blocks of fixed
/// length `d` (time stamps) with uniform stride.
#[derive(Debug, Clone, Copy)]
pub struct GodambeOptions {
    pub n_blocks: usize,
    pub block_len: usize,
    /// Relative finite-difference step on the unconstrained scale.
    pub fd_step: f64,
}

impl GodambeOptions {
    /// Defaults mirroring the application setup scaled to the series
    /// length: block length ~ T/54, at most 500 blocks.
    pub fn for_length(t_len: usize) -> Self {
        let block_len = (t_len as f64 / 54.0).ceil().max(2.0) as usize;
        let n_blocks = 500.min(t_len.saturating_sub(block_len) + 1).max(1);
        GodambeOptions {
            n_blocks,
            block_len,
            fd_step: 1e-4,
        }
    }
}

/// Sandwich-information estimates on the unconstrained scale plus
/// delta-method standard errors on the natural scale.
#[derive(Debug, Clone)]
pub struct GodambeInfo {
    /// Negative Hessian of the pairwise log-likelihood.
    pub h: DMatrix<f64>,
    /// Subsampling variance estimate of the score.
    pub j: DMatrix<f64>,
    /// `H^{-1} J H^{-1}`.
    pub variance: DMatrix<f64>,
    pub std_errors_eta: Vec<f64>,
    /// Natural-scale standard errors aligned with the fit's free names.
    pub std_errors: Vec<f64>,
    pub n_blocks: usize,
    pub block_len: usize,
}

/// Composite-likelihood information criterion and its interpretability
/// rescaling.
#[derive(Debug, Clone, Copy)]
pub struct ClicInfo {
    pub clic: f64,
    pub clic_star: f64,
    /// Effective parameter count `tr(H^{-1} J)`.
    pub penalty: f64,
    /// The rescaling constant: independence log-likelihood over the
    /// pairwise log-likelihood at the optimum.
    pub rescale_c: f64,
}

fn fd_steps(eta: &[f64], rel: f64) -> Vec<f64> {
    eta.iter().map(|&e| rel * (1.0 + e.abs())).collect()
}

/// Negative Hessian and subsampling score variance at the fitted point,
/// with sandwich standard errors. Errors out (no silent pseudo-inverse)
/// when the Hessian is singular.
pub fn godambe<S: ParamSpace>(
    panel: &ExceedancePanel,
    cache: &PairCache,
    space: &S,
    fit: &FitResult<S::Model>,
    opts: &GodambeOptions,
) -> Result<GodambeInfo> {
    let eta = &fit.eta;
    let n = eta.len();
    let h_steps = fd_steps(eta, opts.fd_step);

    let pl_at = |eta: &[f64]| -> Result<f64> {
        let model = space.unpack(eta)?;
        pairwise_loglik(cache, &model)
    };

    // Central-difference Hessian of pl, symmetric 4-point stencil.
    let f0 = pl_at(eta)?;
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut ep = eta.clone();
        let mut em = eta.clone();
        ep[i] += h_steps[i];
        em[i] -= h_steps[i];
        hess[(i, i)] = (pl_at(&ep)? - 2.0 * f0 + pl_at(&em)?) / (h_steps[i] * h_steps[i]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut pp = eta.clone();
            let mut pm = eta.clone();
            let mut mp = eta.clone();
            let mut mm = eta.clone();
            pp[i] += h_steps[i];
            pp[j] += h_steps[j];
            pm[i] += h_steps[i];
            pm[j] -= h_steps[j];
            mp[i] -= h_steps[i];
            mp[j] += h_steps[j];
            mm[i] -= h_steps[i];
            mm[j] -= h_steps[j];
            let v = (pl_at(&pp)? - pl_at(&pm)? - pl_at(&mp)? + pl_at(&mm)?)
                / (4.0 * h_steps[i] * h_steps[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let h = -hess;

    // Subsampling score variance over overlapping temporal blocks.
    let t_len = panel.n_times();
    let d = opts.block_len.min(t_len).max(1);
    let b = opts.n_blocks.min(t_len - d + 1).max(1);
    let stride = if b > 1 {
        (((t_len - d) as f64) / ((b - 1) as f64)).ceil().max(1.0) as usize
    } else {
        1
    };
    let starts: Vec<usize> = (0..b).map(|k| (k * stride).min(t_len - d)).collect();

    let templates = cache.templates();
    let grads: Vec<DVector<f64>> = starts
        .par_iter()
        .map(|&start| -> Result<DVector<f64>> {
            let mut g = DVector::zeros(n);
            for i in 0..n {
                let mut ep = eta.clone();
                let mut em = eta.clone();
                ep[i] += h_steps[i];
                em[i] -= h_steps[i];
                let fp = pairwise_loglik_range(panel, templates, &space.unpack(&ep)?, start, start + d)?;
                let fm = pairwise_loglik_range(panel, templates, &space.unpack(&em)?, start, start + d)?;
                g[i] = (fp - fm) / (2.0 * h_steps[i]);
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut j = DMatrix::<f64>::zeros(n, n);
    for g in &grads {
        j += g * g.transpose() / d as f64;
    }
    j *= t_len as f64 / b as f64;

    let h_inv = h.clone().try_inverse().ok_or_else(|| {
        Error::Singular("negative Hessian of the pairwise likelihood is not invertible".into())
    })?;
    let variance = &h_inv * &j * &h_inv;

    let mut std_errors_eta = Vec::with_capacity(n);
    for i in 0..n {
        let v = variance[(i, i)];
        if v < -1e-10 {
            return Err(Error::Singular(format!(
                "sandwich variance has negative diagonal entry {v} at {i}"
            )));
        }
        std_errors_eta.push(v.max(0.0).sqrt());
    }
    let scale = space.scale_to_natural(&fit.model);
    let std_errors = std_errors_eta
        .iter()
        .zip(&scale)
        .map(|(s, d)| s * d)
        .collect();

    Ok(GodambeInfo {
        h,
        j,
        variance,
        std_errors_eta,
        std_errors,
        n_blocks: b,
        block_len: d,
    })
}

/// Composite likelihood information criterion from a fit with attached
/// Godambe information. `indep_loglik` sets the interpretability rescaling.
pub fn clic<M>(fit: &FitResult<M>, indep_loglik: f64) -> Result<ClicInfo> {
    let g = fit
        .godambe
        .as_ref()
        .ok_or_else(|| Error::Parameter("clic requires godambe information".into()))?;
    let h_lu = g.h.clone().lu();
    let solved = h_lu
        .solve(&g.j)
        .ok_or_else(|| Error::Singular("H singular in CLIC penalty".into()))?;
    let penalty = solved.trace();
    let clic = -fit.pl + penalty;
    let rescale_c = indep_loglik / fit.pl;
    Ok(ClicInfo {
        clic,
        clic_star: rescale_c * clic,
        penalty,
        rescale_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CylinderKernel;
    use crate::likelihood::{fit_hierarchical, FitOptions, HierParamSpace, PairScheme, ParamId};
    use crate::model::ModelParams;
    use nalgebra::Vector2;

    fn params() -> ModelParams {
        let k = CylinderKernel::new(0.2, 0.2, 0.0, 3.0, Vector2::zeros()).unwrap();
        ModelParams::standard(k, 9.0).unwrap()
    }

    fn synthetic_panel(t_len: usize) -> ExceedancePanel {
        // Deterministic pseudo-data with temporal runs and partial spatial
        // co-exceedance, so kernel size and duration are both identified.
        let sites = vec![Vector2::new(0.0, 0.0), Vector2::new(0.1, 0.0)];
        let mut values = vec![0.0; 2 * t_len];
        for t in 0..t_len {
            let phase = t % 10;
            let y = 0.5 + ((t * 13) % 7) as f64 * 0.8;
            if phase < 3 {
                values[t] = y;
            }
            if (1..=2).contains(&phase) || phase == 5 {
                values[t_len + t] = y + 0.3;
            }
        }
        let times: Vec<f64> = (0..t_len).map(|t| t as f64).collect();
        ExceedancePanel::new(sites, times, values, vec![false; 2 * t_len]).unwrap()
    }

    #[test]
    fn single_block_reduces_to_outer_product() {
        let p = params();
        let panel = synthetic_panel(60);
        let cache = PairCache::build(&panel, &PairScheme::new(1.0, 2).unwrap()).unwrap();
        let space = HierParamSpace::new(p, vec![ParamId::SemiX, ParamId::Duration]);
        let fit = fit_hierarchical(
            &cache,
            &space,
            &p,
            &FitOptions {
                max_eval: 400,
                ..Default::default()
            },
        )
        .unwrap();
        let opts = GodambeOptions {
            n_blocks: 1,
            block_len: 60,
            fd_step: 1e-4,
        };
        let info = godambe(&panel, &cache, &space, &fit, &opts).unwrap();
        // J = T * (1/T) g g': the outer product of the full score.
        let eta = &fit.eta;
        let h = 1e-4 * (1.0 + eta[0].abs());
        let mut g = DVector::zeros(2);
        for i in 0..2 {
            let hi = 1e-4 * (1.0 + eta[i].abs());
            let mut ep = eta.clone();
            let mut em = eta.clone();
            ep[i] += hi;
            em[i] -= hi;
            let fp = pairwise_loglik(&cache, &space.unpack(&ep).unwrap()).unwrap();
            let fm = pairwise_loglik(&cache, &space.unpack(&em).unwrap()).unwrap();
            g[i] = (fp - fm) / (2.0 * hi);
        }
        let expect = &g * g.transpose();
        let _ = h;
        for i in 0..2 {
            for jdx in 0..2 {
                assert!(
                    (info.j[(i, jdx)] - expect[(i, jdx)]).abs()
                        <= 1e-8 * (1.0 + expect[(i, jdx)].abs()),
                    "J mismatch at ({i},{jdx})"
                );
            }
        }
        // First-order condition at the optimum.
        assert!(g.norm() < 1.0, "score at optimum too large: {}", g.norm());
    }

    #[test]
    fn clic_penalty_equals_dim_when_j_is_h() {
        let p = params();
        let panel = synthetic_panel(50);
        let cache = PairCache::build(&panel, &PairScheme::new(1.0, 1).unwrap()).unwrap();
        let space = HierParamSpace::new(p, vec![ParamId::SemiX, ParamId::Duration]);
        let mut fit = fit_hierarchical(
            &cache,
            &space,
            &p,
            &FitOptions {
                max_eval: 300,
                ..Default::default()
            },
        )
        .unwrap();
        let opts = GodambeOptions {
            n_blocks: 8,
            block_len: 10,
            fd_step: 1e-4,
        };
        let mut info = godambe(&panel, &cache, &space, &fit, &opts).unwrap();
        info.j = info.h.clone();
        fit.godambe = Some(info);
        let c = clic(&fit, -100.0).unwrap();
        assert!((c.penalty - 2.0).abs() < 1e-9);
        assert!((c.clic - (-fit.pl + 2.0)).abs() < 1e-9);
        assert!((c.clic_star - (-100.0 / fit.pl) * c.clic).abs() < 1e-12);
    }
}
