//! Empirical tail-dependence measures, stationary-bootstrap confidence
//! bands, and the multivariate co-exceedance RMSE comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::likelihood::ExceedancePanel;
use crate::simulate::{PanelSimulator, SimulationDesign};
use crate::{Error, Result};

/// A pair-at-lag descriptor: series `(site_i, t)` against `(site_j, t + lag)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairAtLag {
    pub site_i: usize,
    pub site_j: usize,
    pub lag: usize,
}

/// Empirical chi/chibar at one quantile, pooled over a pair set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiEstimate {
    pub q: f64,
    pub chi: f64,
    pub chibar: f64,
    /// Number of complete pair observations behind the estimate.
    pub n_pairs: u64,
    pub ci_lo: Option<(f64, f64)>,
    pub ci_hi: Option<(f64, f64)>,
}

/// Type-7 empirical quantile (linear interpolation of order statistics).
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = h - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn site_quantile(panel: &ExceedancePanel, site: usize, q: f64) -> Option<f64> {
    let mut vals: Vec<f64> = (0..panel.n_times())
        .filter(|&t| !panel.is_missing(site, t))
        .map(|t| panel.value(site, t))
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    Some(quantile_type7(&vals, q))
}

/// Plug-in chi(q) and chibar(q) pooled over the pair set, using per-site
/// empirical marginal quantiles; pairs with a missing member are dropped.
/// The conditioning event is on the second pair member.
pub fn empirical_chi(panel: &ExceedancePanel, pairs: &[PairAtLag], q: f64) -> Result<ChiEstimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile must be in (0,1), got {q}")));
    }
    if pairs.is_empty() {
        return Err(Error::Data("empty pair set".into()));
    }
    let mut thresholds = vec![None; panel.n_sites()];
    let need = |site: usize, thresholds: &mut Vec<Option<f64>>| -> Result<f64> {
        if thresholds[site].is_none() {
            thresholds[site] = Some(site_quantile(panel, site, q).ok_or_else(|| {
                Error::Data(format!("site {site} has no observed values"))
            })?);
        }
        Ok(thresholds[site].unwrap())
    };

    let mut n_total = 0u64;
    let mut n_cond = 0u64;
    let mut n_joint = 0u64;
    for pr in pairs {
        let qi = need(pr.site_i, &mut thresholds)?;
        let qj = need(pr.site_j, &mut thresholds)?;
        let t_len = panel.n_times();
        for t in 0..t_len.saturating_sub(pr.lag) {
            if panel.is_missing(pr.site_i, t) || panel.is_missing(pr.site_j, t + pr.lag) {
                continue;
            }
            n_total += 1;
            let second = panel.value(pr.site_j, t + pr.lag) > qj;
            if second {
                n_cond += 1;
                if panel.value(pr.site_i, t) > qi {
                    n_joint += 1;
                }
            }
        }
    }
    if n_total == 0 {
        return Err(Error::Data("no complete pair observations at this lag".into()));
    }
    let chi = if n_cond > 0 {
        n_joint as f64 / n_cond as f64
    } else {
        0.0
    };
    let chibar = if n_joint > 0 {
        let p2 = n_cond as f64 / n_total as f64;
        let pj = n_joint as f64 / n_total as f64;
        2.0 * p2.ln() / pj.ln() - 1.0
    } else {
        -1.0
    };
    Ok(ChiEstimate {
        q,
        chi,
        chibar,
        n_pairs: n_total,
        ci_lo: None,
        ci_hi: None,
    })
}

/// Stationary-bootstrap configuration: number of replicates and the mean
/// geometric block length (time steps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapScheme {
    pub n_boot: usize,
    pub mean_block: f64,
}

impl BootstrapScheme {
    pub fn new(n_boot: usize, mean_block: f64) -> Result<Self> {
        if n_boot < 1 {
            return Err(Error::Parameter("n_boot must be >= 1".into()));
        }
        if !(mean_block >= 1.0 && mean_block.is_finite()) {
            return Err(Error::Parameter(format!(
                "mean block length must be >= 1, got {mean_block}"
            )));
        }
        Ok(BootstrapScheme { n_boot, mean_block })
    }
}

/// Confidence band from bootstrap replicates of a vector statistic.
#[derive(Debug, Clone)]
pub struct BootstrapBand {
    /// 2.5% and 97.5% empirical quantiles per component.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Replicate-by-component matrix (row per replicate).
    pub replicates: Vec<Vec<f64>>,
    /// Components whose replicate distribution is (numerically) constant.
    pub degenerate: Vec<bool>,
}

/// Resampled time indices of one stationary-bootstrap replicate: blocks of
/// geometric length wrapped circularly. A mean block length of at least the
/// series length degenerates to a uniformly rotated copy.
pub fn stationary_bootstrap_indices(
    t_len: usize,
    mean_block: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut idx = Vec::with_capacity(t_len);
    if mean_block >= t_len as f64 {
        let start = rng.gen_range(0..t_len);
        for m in 0..t_len {
            idx.push((start + m) % t_len);
        }
        return idx;
    }
    let restart = 1.0 / mean_block;
    let mut cur = rng.gen_range(0..t_len);
    idx.push(cur);
    for _ in 1..t_len {
        if rng.gen::<f64>() < restart {
            cur = rng.gen_range(0..t_len);
        } else {
            cur = (cur + 1) % t_len;
        }
        idx.push(cur);
    }
    idx
}

/// Stationary bootstrap of a pure panel statistic. Replicates run in
/// parallel from seed-derived substreams; the band is the empirical
/// 2.5%/97.5% envelope.
pub fn stationary_bootstrap<F>(
    panel: &ExceedancePanel,
    scheme: &BootstrapScheme,
    seed: u64,
    statistic: F,
) -> Result<BootstrapBand>
where
    F: Fn(&ExceedancePanel) -> Result<Vec<f64>> + Sync,
{
    let t_len = panel.n_times();
    let replicates: Vec<Vec<f64>> = (0..scheme.n_boot)
        .into_par_iter()
        .map(|b| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + b as u64);
            let idx = stationary_bootstrap_indices(t_len, scheme.mean_block, &mut rng);
            statistic(&panel.resample_times(&idx)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let dim = replicates
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::Data("no bootstrap replicates".into()))?;
    if replicates.iter().any(|r| r.len() != dim) {
        return Err(Error::Data("statistic dimension varies across replicates".into()));
    }
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    let mut degenerate = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut col: Vec<f64> = replicates.iter().map(|r| r[d]).collect();
        col.sort_by(f64::total_cmp);
        lo.push(quantile_type7(&col, 0.025));
        hi.push(quantile_type7(&col, 0.975));
        degenerate.push((col[col.len() - 1] - col[0]).abs() < 1e-14);
    }
    Ok(BootstrapBand {
        lo,
        hi,
        replicates,
        degenerate,
    })
}

/// Indices of the `k` nearest Euclidean neighbors of every site.
pub fn nearest_neighbors(sites: &[nalgebra::Vector2<f64>], k: usize) -> Result<Vec<Vec<usize>>> {
    if sites.len() <= k {
        return Err(Error::Data(format!(
            "need more than {k} sites for {k} nearest neighbors"
        )));
    }
    Ok(sites
        .iter()
        .enumerate()
        .map(|(i, si)| {
            let mut order: Vec<(f64, usize)> = sites
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, sj)| ((sj - si).norm(), j))
                .collect();
            order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            order.iter().take(k).map(|&(_, j)| j).collect()
        })
        .collect())
}

/// Multivariate conditional co-exceedance: the empirical frequency with
/// which all neighbors of site `i` exceed their `q`-quantiles at time `t`,
/// given that site `i` exceeded at `t - h`. `None` where the conditioning
/// event never occurs.
pub fn chi_star(
    panel: &ExceedancePanel,
    neighbors: &[Vec<usize>],
    h: usize,
    q: f64,
) -> Result<Vec<Option<f64>>> {
    if neighbors.len() != panel.n_sites() {
        return Err(Error::Data("neighbor map does not match the panel".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile must be in (0,1), got {q}")));
    }
    let thresholds: Vec<Option<f64>> = (0..panel.n_sites())
        .map(|i| site_quantile(panel, i, q))
        .collect();
    let t_len = panel.n_times();
    let mut out = Vec::with_capacity(panel.n_sites());
    for (i, nbrs) in neighbors.iter().enumerate() {
        let Some(qi) = thresholds[i] else {
            out.push(None);
            continue;
        };
        let mut n_cond = 0u64;
        let mut n_joint = 0u64;
        'time: for t in h..t_len {
            if panel.is_missing(i, t - h) || panel.value(i, t - h) <= qi {
                continue;
            }
            for &j in nbrs {
                if panel.is_missing(j, t) || thresholds[j].is_none() {
                    continue 'time;
                }
            }
            n_cond += 1;
            if nbrs
                .iter()
                .all(|&j| panel.value(j, t) > thresholds[j].expect("checked"))
            {
                n_joint += 1;
            }
        }
        out.push(if n_cond > 0 {
            Some(n_joint as f64 / n_cond as f64)
        } else {
            None
        });
    }
    Ok(out)
}

/// Per-model RMSE of simulated vs observed multivariate co-exceedance.
#[derive(Debug, Clone)]
pub struct RmseReport {
    pub labels: Vec<String>,
    /// Per-site RMSE per model (`None` where the observed estimate is
    /// undefined).
    pub per_site: Vec<Vec<Option<f64>>>,
    /// Sum of defined per-site RMSEs per model.
    pub total: Vec<f64>,
    /// Observed per-site estimates.
    pub observed: Vec<Option<f64>>,
}

/// Parametric-bootstrap goodness of fit: simulate `n_sim` panels from each
/// fitted model on the observation design (with the observed missing mask),
/// compute the co-exceedance statistic per site, and report
/// `RMSE_i = sqrt(mean_j (sim_ij - obs_i)^2)` plus the site total.
pub fn rmse_comparison(
    panel: &ExceedancePanel,
    models: &[&dyn PanelSimulator],
    n_sim: usize,
    h: usize,
    q: f64,
    neighbor_count: usize,
    seed: u64,
) -> Result<RmseReport> {
    let neighbors = nearest_neighbors(panel.sites(), neighbor_count)?;
    let observed = chi_star(panel, &neighbors, h, q)?;
    let s_len = panel.n_sites();

    let mut per_site = Vec::with_capacity(models.len());
    let mut total = Vec::with_capacity(models.len());
    let mut labels = Vec::with_capacity(models.len());
    for (m_idx, model) in models.iter().enumerate() {
        labels.push(model.label());
        let sims: Vec<Vec<Option<f64>>> = (0..n_sim)
            .into_par_iter()
            .map(|j| -> Result<Vec<Option<f64>>> {
                let design = SimulationDesign::new(
                    panel.sites().to_vec(),
                    panel.times().to_vec(),
                    seed
                        .wrapping_add(1 + m_idx as u64)
                        .wrapping_mul(0x9E3779B97F4A7C15)
                        .wrapping_add(j as u64),
                )?;
                let mut sim = model.simulate(&design)?;
                // observed mask travels onto the simulated panel
                for i in 0..s_len {
                    for t in 0..panel.n_times() {
                        if panel.is_missing(i, t) {
                            sim.set_missing(i, t);
                        }
                    }
                }
                chi_star(&sim, &neighbors, h, q)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut site_rmse = Vec::with_capacity(s_len);
        let mut tot = 0.0;
        for i in 0..s_len {
            let Some(obs) = observed[i] else {
                site_rmse.push(None);
                continue;
            };
            let devs: Vec<f64> = sims
                .iter()
                .filter_map(|rep| rep[i])
                .map(|p| (p - obs) * (p - obs))
                .collect();
            if devs.is_empty() {
                site_rmse.push(None);
                continue;
            }
            let rmse = (devs.iter().sum::<f64>() / devs.len() as f64).sqrt();
            site_rmse.push(Some(rmse));
            tot += rmse;
        }
        per_site.push(site_rmse);
        total.push(tot);
    }
    Ok(RmseReport {
        labels,
        per_site,
        total,
        observed,
    })
}

/// Equal-count distance bins over site pairs (for the spatial chi curves):
/// returns per-bin (mean distance, pair list).
pub fn distance_bins(
    sites: &[nalgebra::Vector2<f64>],
    n_bins: usize,
    max_dist: f64,
) -> Vec<(f64, Vec<PairAtLag>)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            let d = (sites[j] - sites[i]).norm();
            if d <= max_dist {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_bins = n_bins.max(1).min(pairs.len().max(1));
    let per = (pairs.len() as f64 / n_bins as f64).ceil() as usize;
    pairs
        .chunks(per.max(1))
        .map(|chunk| {
            let mean_d = chunk.iter().map(|c| c.0).sum::<f64>() / chunk.len() as f64;
            let members = chunk
                .iter()
                .map(|&(_, i, j)| PairAtLag {
                    site_i: i,
                    site_j: j,
                    lag: 0,
                })
                .collect();
            (mean_d, members)
        })
        .collect()
}

/// Local-linear (Gaussian kernel) smoothing of a curve on scattered
/// abscissae; used for the spatial chi curves. Bandwidth is in the
/// abscissa's units.
pub fn local_linear_smooth(x: &[f64], y: &[f64], bandwidth: f64, at: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len());
    at.iter()
        .map(|&x0| {
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&xi, &yi) in x.iter().zip(y) {
                let u = (xi - x0) / bandwidth;
                let w = (-0.5 * u * u).exp();
                let d = xi - x0;
                s0 += w;
                s1 += w * d;
                s2 += w * d * d;
                t0 += w * yi;
                t1 += w * d * yi;
            }
            let denom = s0 * s2 - s1 * s1;
            if denom.abs() < 1e-12 {
                t0 / s0.max(1e-300)
            } else {
                (s2 * t0 - s1 * t1) / denom
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn grid_panel(values: Vec<f64>, s: usize, t: usize) -> ExceedancePanel {
        let sites: Vec<Vector2<f64>> = (0..s)
            .map(|i| Vector2::new(i as f64, (i % 3) as f64 * 0.5))
            .collect();
        let times: Vec<f64> = (0..t).map(|i| i as f64).collect();
        ExceedancePanel::new(sites, times, values, vec![false; s * t]).unwrap()
    }

    #[test]
    fn quantile_type7_matches_reference() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 1.0), 4.0);
        assert_eq!(quantile_type7(&v, 0.5), 2.5);
        assert!((quantile_type7(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn comonotone_series_have_chi_one() {
        // Two identical series: chi = 1 and chibar = 1.
        let t = 400;
        let mut vals = Vec::with_capacity(2 * t);
        for i in 0..t {
            vals.push(((i * 37) % 101) as f64);
        }
        let col = vals.clone();
        vals.extend(col);
        let panel = grid_panel(vals, 2, t);
        let est = empirical_chi(
            &panel,
            &[PairAtLag { site_i: 0, site_j: 1, lag: 0 }],
            0.9,
        )
        .unwrap();
        assert_eq!(est.chi, 1.0);
        assert!((est.chibar - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_series_chi_near_level() {
        // Independent uniforms: chi(q) ~ 1-q, chibar ~ 0.
        let t = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..2 * t).map(|_| rng.gen::<f64>()).collect();
        let panel = grid_panel(vals, 2, t);
        let est = empirical_chi(
            &panel,
            &[PairAtLag { site_i: 0, site_j: 1, lag: 0 }],
            0.95,
        )
        .unwrap();
        let se = (0.05f64 * 0.95 / (t as f64 * 0.05)).sqrt();
        assert!((est.chi - 0.05).abs() <= 3.0 * se, "chi {} (se {se})", est.chi);
        assert!(est.chibar.abs() < 0.05, "chibar {}", est.chibar);
    }

    #[test]
    fn chi_invariant_under_monotone_transform() {
        let t = 5000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let vals: Vec<f64> = (0..2 * t).map(|_| rng.gen::<f64>()).collect();
        let panel = grid_panel(vals.clone(), 2, t);
        let transformed: Vec<f64> = vals.iter().map(|&v| (3.0 * v).exp() - 1.0).collect();
        let panel_t = grid_panel(transformed, 2, t);
        let pair = [PairAtLag { site_i: 0, site_j: 1, lag: 0 }];
        let a = empirical_chi(&panel, &pair, 0.9).unwrap();
        let b = empirical_chi(&panel_t, &pair, 0.9).unwrap();
        assert_eq!(a.chi.to_bits(), b.chi.to_bits());
        assert_eq!(a.chibar.to_bits(), b.chibar.to_bits());
    }

    #[test]
    fn bootstrap_rotation_when_block_is_series_length() {
        let t = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let idx = stationary_bootstrap_indices(t, t as f64, &mut rng);
            let start = idx[0];
            for (m, &i) in idx.iter().enumerate() {
                assert_eq!(i, (start + m) % t);
            }
        }
    }

    #[test]
    fn bootstrap_deterministic_and_flags_degenerate() {
        let t = 60;
        let vals: Vec<f64> = (0..t).map(|i| (i % 7) as f64).collect();
        let panel = ExceedancePanel::new(
            vec![Vector2::zeros()],
            (0..t).map(|i| i as f64).collect(),
            vals,
            vec![false; t],
        )
        .unwrap();
        let scheme = BootstrapScheme::new(50, 5.0).unwrap();
        // statistic: [mean, constant]
        let stat = |p: &ExceedancePanel| -> Result<Vec<f64>> {
            let m = (0..p.n_times()).map(|t| p.value(0, t)).sum::<f64>() / p.n_times() as f64;
            Ok(vec![m, 42.0])
        };
        let a = stationary_bootstrap(&panel, &scheme, 11, stat).unwrap();
        let b = stationary_bootstrap(&panel, &scheme, 11, stat).unwrap();
        assert_eq!(a.lo, b.lo);
        assert_eq!(a.hi, b.hi);
        assert!(!a.degenerate[0]);
        assert!(a.degenerate[1]);
    }

    #[test]
    fn nearest_neighbor_map() {
        let sites = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(5.0, 5.0),
        ];
        let nn = nearest_neighbors(&sites, 2).unwrap();
        assert_eq!(nn[0], vec![1, 2]);
        assert_eq!(nn[3].len(), 2);
        assert!(nearest_neighbors(&sites, 4).is_err());
    }

    #[test]
    fn chi_star_duplicated_panel_is_one() {
        let t = 200;
        let mut vals = Vec::new();
        let base: Vec<f64> = (0..t).map(|i| ((i * 13) % 29) as f64).collect();
        for _ in 0..5 {
            vals.extend(base.clone());
        }
        let sites: Vec<Vector2<f64>> = (0..5)
            .map(|i| Vector2::new(i as f64, 0.3 * i as f64))
            .collect();
        let panel = ExceedancePanel::new(
            sites,
            (0..t).map(|i| i as f64).collect(),
            vals,
            vec![false; 5 * t],
        )
        .unwrap();
        let nn = nearest_neighbors(panel.sites(), 4).unwrap();
        let cs = chi_star(&panel, &nn, 0, 0.8).unwrap();
        for v in cs {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn chi_star_flags_empty_conditioning() {
        // All-zero site never exceeds: conditioning event never occurs.
        let t = 50;
        let mut vals = vec![0.0; 5 * t];
        for i in 1..5 {
            for j in 0..t {
                vals[i * t + j] = ((i * j) % 11) as f64;
            }
        }
        let sites: Vec<Vector2<f64>> = (0..5).map(|i| Vector2::new(i as f64, 0.0)).collect();
        let panel = ExceedancePanel::new(
            sites,
            (0..t).map(|i| i as f64).collect(),
            vals,
            vec![false; 5 * t],
        )
        .unwrap();
        let nn = nearest_neighbors(panel.sites(), 4).unwrap();
        let cs = chi_star(&panel, &nn, 1, 0.9).unwrap();
        assert_eq!(cs[0], None);
    }

    #[test]
    fn distance_bins_partition_pairs() {
        let sites: Vec<Vector2<f64>> = (0..10).map(|i| Vector2::new(i as f64, 0.0)).collect();
        let bins = distance_bins(&sites, 3, 100.0);
        let total: usize = bins.iter().map(|(_, v)| v.len()).sum();
        assert_eq!(total, 45);
        // mean distances increase across bins
        for w in bins.windows(2) {
            assert!(w[1].0 >= w[0].0);
        }
    }

    #[test]
    fn smoother_reproduces_linear_data() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v + 1.0).collect();
        let sm = local_linear_smooth(&x, &y, 3.0, &[4.5, 10.0]);
        assert!((sm[0] - 10.0).abs() < 1e-9);
        assert!((sm[1] - 21.0).abs() < 1e-9);
    }
}
