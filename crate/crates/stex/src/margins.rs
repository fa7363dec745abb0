//! Per-site marginal fitting and the transform to common censored margins.
//!
//! Thresholds are empirical quantiles of each station series; excesses above
//! the threshold get a generalized-Pareto fit by maximum likelihood (simplex
//! on (log scale, shape), moment-initialized). Fitted margins then map raw
//! excesses onto the common scale where the latent-model normalization
//! `alpha = beta = 1`, `sigma = kappa + 1`, `xi = 1` holds.

use nalgebra::Vector2;

use crate::diagnostics::quantile_type7;
use crate::likelihood::ExceedancePanel;
use crate::opt::{nelder_mead, SimplexOptions};
use crate::{Error, Result};

/// One station's raw hourly series.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub id: String,
    /// Projected coordinates (km).
    pub coords: Vector2<f64>,
    pub elevation: Option<f64>,
    /// Hourly values; `None` marks a missing observation.
    pub values: Vec<Option<f64>>,
}

impl StationSeries {
    pub fn missing_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 1.0;
        }
        self.values.iter().filter(|v| v.is_none()).count() as f64 / self.values.len() as f64
    }
}

/// Convention for the threshold quantile order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum QuantileConvention {
    /// Quantile over all observed hours (default).
    AllHours,
    /// Quantile over hours with positive values only.
    WetHours,
}

/// Per-site threshold and generalized-Pareto excess fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    pub station: String,
    pub threshold: f64,
    pub gp_shape: f64,
    pub gp_scale: f64,
    pub n_exceed: usize,
    pub loglik: f64,
    /// Observed-information standard errors for (scale, shape) when the
    /// numerical Hessian is well conditioned.
    pub std_errors: Option<(f64, f64)>,
}

/// Negative GP log-likelihood of excesses for (log sigma, xi).
fn gp_negloglik(excesses: &[f64], log_sigma: f64, xi: f64) -> Option<f64> {
    let sigma = log_sigma.exp();
    if !sigma.is_finite() || sigma <= 0.0 {
        return None;
    }
    let mut acc = excesses.len() as f64 * log_sigma;
    if xi.abs() < 1e-9 {
        for &y in excesses {
            acc += y / sigma;
        }
    } else {
        for &y in excesses {
            let w = 1.0 + xi * y / sigma;
            if w <= 0.0 {
                return None;
            }
            acc += (1.0 + 1.0 / xi) * w.ln();
        }
    }
    acc.is_finite().then_some(acc)
}

/// Maximum-likelihood generalized-Pareto fit to positive excesses.
/// Moment-based initialization; shape constrained to (-0.95, 5).
pub fn gp_fit(excesses: &[f64]) -> Result<(f64, f64, f64)> {
    if excesses.len() < 2 {
        return Err(Error::Data("need at least 2 excesses for a GP fit".into()));
    }
    if excesses.iter().any(|&y| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::Data("excesses must be positive and finite".into()));
    }
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let var = excesses.iter().map(|&y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
    // Moment estimators, clipped into the admissible region.
    let xi0 = (0.5 * (1.0 - mean * mean / var)).clamp(-0.4, 0.45);
    let sigma0 = (mean * (1.0 - xi0)).max(1e-8);

    let obj = |x: &[f64]| -> Option<f64> {
        if x[1] <= -0.95 || x[1] >= 5.0 {
            return None;
        }
        gp_negloglik(excesses, x[0], x[1])
    };
    let mut opts = SimplexOptions::new(vec![0.3, 0.15]);
    opts.max_eval = 2000;
    let res = nelder_mead(obj, &[sigma0.ln(), xi0], &opts)
        .ok_or_else(|| Error::NoConvergence("GP fit start rejected".into()))?;
    Ok((res.x[0].exp(), res.x[1], -res.f))
}

fn gp_std_errors(excesses: &[f64], sigma: f64, xi: f64) -> Option<(f64, f64)> {
    // Observed information by central differences in (sigma, xi).
    let f = |s: f64, x: f64| gp_negloglik(excesses, s.ln(), x);
    let hs = 1e-5 * (1.0 + sigma);
    let hx = 1e-5 * (1.0 + xi.abs());
    let f0 = f(sigma, xi)?;
    let dss = (f(sigma + hs, xi)? - 2.0 * f0 + f(sigma - hs, xi)?) / (hs * hs);
    let dxx = (f(sigma, xi + hx)? - 2.0 * f0 + f(sigma, xi - hx)?) / (hx * hx);
    let dsx = (f(sigma + hs, xi + hx)? - f(sigma + hs, xi - hx)? - f(sigma - hs, xi + hx)?
        + f(sigma - hs, xi - hx)?)
        / (4.0 * hs * hx);
    let det = dss * dxx - dsx * dsx;
    if det <= 0.0 || dss <= 0.0 {
        return None;
    }
    Some(((dxx / det).sqrt(), (dss / det).sqrt()))
}

/// Fits the threshold and generalized-Pareto excess law of one station.
pub fn fit_margin(
    series: &StationSeries,
    threshold_order: f64,
    convention: QuantileConvention,
    min_exceed: usize,
) -> Result<MarginalFit> {
    if !(threshold_order > 0.0 && threshold_order < 1.0) {
        return Err(Error::Parameter(format!(
            "threshold order must be in (0,1), got {threshold_order}"
        )));
    }
    let observed: Vec<f64> = series.values.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::Data(format!("station {} has no observations", series.id)));
    }
    let mut pool: Vec<f64> = match convention {
        QuantileConvention::AllHours => observed.clone(),
        QuantileConvention::WetHours => observed.iter().copied().filter(|&v| v > 0.0).collect(),
    };
    if pool.is_empty() {
        return Err(Error::Data(format!("station {} has no positive values", series.id)));
    }
    pool.sort_by(f64::total_cmp);
    let threshold = quantile_type7(&pool, threshold_order);

    let excesses: Vec<f64> = observed
        .iter()
        .filter(|&&v| v > threshold)
        .map(|&v| v - threshold)
        .collect();
    if excesses.len() < min_exceed {
        return Err(Error::Data(format!(
            "station {}: {} excesses below the floor of {min_exceed}",
            series.id,
            excesses.len()
        )));
    }
    let (gp_scale, gp_shape, loglik) = gp_fit(&excesses)?;
    Ok(MarginalFit {
        station: series.id.clone(),
        threshold,
        gp_shape,
        gp_scale,
        n_exceed: excesses.len(),
        loglik,
        std_errors: gp_std_errors(&excesses, gp_scale, gp_shape),
    })
}

/// Transforms raw series to the common censored scale: zeros stay zero,
/// excesses map through
/// `(kappa+1) ((1 + xi_hat y / sigma_hat)^{1/xi_hat} - 1)` with
/// `kappa = q0/(1-q0)`. Sites must come with their marginal fits, in panel
/// order.
pub fn to_common_margins(
    series: &[StationSeries],
    fits: &[MarginalFit],
    threshold_order: f64,
) -> Result<(ExceedancePanel, f64)> {
    if series.is_empty() || series.len() != fits.len() {
        return Err(Error::Data("series/fits length mismatch".into()));
    }
    let t_len = series[0].values.len();
    if series.iter().any(|s| s.values.len() != t_len) {
        return Err(Error::Data("stations have unequal series lengths".into()));
    }
    let kappa = threshold_order / (1.0 - threshold_order);

    let mut sites = Vec::with_capacity(series.len());
    let mut values = vec![0.0; series.len() * t_len];
    let mut missing = vec![false; series.len() * t_len];
    for (i, (s, fit)) in series.iter().zip(fits).enumerate() {
        if s.id != fit.station {
            return Err(Error::Data(format!(
                "fit for station {} paired with series {}",
                fit.station, s.id
            )));
        }
        sites.push(s.coords);
        for (t, v) in s.values.iter().enumerate() {
            let idx = i * t_len + t;
            match v {
                None => missing[idx] = true,
                Some(raw) => {
                    let y = raw - fit.threshold;
                    values[idx] = if y <= 0.0 {
                        0.0
                    } else {
                        transform_excess(y, fit.gp_shape, fit.gp_scale, kappa)
                    };
                }
            }
        }
    }
    let times: Vec<f64> = (0..t_len).map(|t| t as f64).collect();
    Ok((ExceedancePanel::new(sites, times, values, missing)?, kappa))
}

/// The common-margin map of one positive excess.
pub fn transform_excess(y: f64, xi_hat: f64, sigma_hat: f64, kappa: f64) -> f64 {
    debug_assert!(y > 0.0 && sigma_hat > 0.0);
    if xi_hat.abs() < 1e-9 {
        (kappa + 1.0) * (y / sigma_hat).exp_m1()
    } else {
        let w = (1.0 + xi_hat * y / sigma_hat).max(1e-300);
        (kappa + 1.0) * (w.powf(1.0 / xi_hat) - 1.0)
    }
}
