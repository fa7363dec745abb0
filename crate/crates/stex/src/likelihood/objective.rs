use rayon::prelude::*;

use super::density::PairDensityModel;
use super::pairs::{PairCache, PairTemplates, TemplateBucket, TemplateGeom};
use super::ExceedancePanel;
use crate::Result;

fn template_term<M: PairDensityModel>(
    model: &M,
    geom: &TemplateGeom,
    bucket: &TemplateBucket,
) -> Result<f64> {
    let st = model.prepare(geom)?;
    let mut acc = 0.0;
    if bucket.n00 > 0 {
        acc += bucket.n00 as f64 * model.log_mass00(&st)?;
    }
    for &y in &bucket.singles {
        acc += model.log_single(&st, y)?;
    }
    for &(lo, hi) in &bucket.joints {
        acc += model.log_joint(&st, lo, hi)?;
    }
    Ok(acc)
}

/// Censored pairwise log-likelihood over the cached pair set.
///
/// Templates are processed in parallel; the reduction sums the per-template
/// partial sums in canonical template order, so the result is bitwise
/// independent of the thread count.
pub fn pairwise_loglik<M: PairDensityModel>(cache: &PairCache, model: &M) -> Result<f64> {
    let terms = pairwise_loglik_terms(cache, model)?;
    Ok(terms.iter().sum())
}

/// Per-template contributions in canonical template order.
pub fn pairwise_loglik_terms<M: PairDensityModel>(
    cache: &PairCache,
    model: &M,
) -> Result<Vec<f64>> {
    cache
        .templates()
        .templates()
        .par_iter()
        .zip(cache.buckets().par_iter())
        .map(|(geom, bucket)| template_term(model, geom, bucket))
        .collect()
}

/// Pairwise log-likelihood restricted to pairs whose members both fall in
/// the time-index window `[t_start, t_end)`. Used by the subsampling
/// variance estimator; classification happens on the fly.
pub fn pairwise_loglik_range<M: PairDensityModel>(
    panel: &ExceedancePanel,
    templates: &PairTemplates,
    model: &M,
    t_start: usize,
    t_end: usize,
) -> Result<f64> {
    let t_end = t_end.min(panel.n_times());
    let mut total = 0.0;
    for geom in templates.templates() {
        let st = model.prepare(geom)?;
        let k = geom.lag_steps;
        let mut acc = 0.0;
        for t in t_start..t_end.saturating_sub(k) {
            if panel.is_missing(geom.site_i, t) || panel.is_missing(geom.site_j, t + k) {
                continue;
            }
            let y1 = panel.value(geom.site_i, t);
            let y2 = panel.value(geom.site_j, t + k);
            acc += match (y1 > 0.0, y2 > 0.0) {
                (false, false) => model.log_mass00(&st)?,
                (true, false) => model.log_single(&st, y1)?,
                (false, true) => model.log_single(&st, y2)?,
                (true, true) => {
                    let (lo, hi) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
                    model.log_joint(&st, lo, hi)?
                }
            };
        }
        total += acc;
    }
    Ok(total)
}
