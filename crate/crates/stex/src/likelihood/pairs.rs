use nalgebra::Vector2;

use super::{ExceedancePanel, PairScheme};
use crate::{Error, Result};

/// Geometry of one pair template: members are `(site_i, t)` and
/// `(site_j, t + lag_steps)` for every admissible `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateGeom {
    pub site_i: usize,
    pub site_j: usize,
    pub lag_steps: usize,
    /// `site_j - site_i` (km).
    pub offset: Vector2<f64>,
    /// `lag_steps` in time units (hours).
    pub time_lag: f64,
}

/// The retained pair templates in canonical order: sorted by lag, then by
/// the site coordinates (so the enumeration is invariant under site
/// relabeling).
#[derive(Debug, Clone)]
pub struct PairTemplates {
    templates: Vec<TemplateGeom>,
    time_step: f64,
}

impl PairTemplates {
    pub fn build(panel: &ExceedancePanel, scheme: &PairScheme) -> Result<Self> {
        let step = if panel.n_times() > 1 { panel.time_step()? } else { 1.0 };
        let s = panel.n_sites();
        let mut templates = Vec::new();
        for k in 0..=scheme.delta_t {
            if k >= panel.n_times() {
                break;
            }
            for i in 0..s {
                for j in 0..s {
                    // {1 - 1_{i >= j, k = 0}}: at lag zero keep each
                    // unordered pair once and drop self-pairs.
                    if k == 0 && i >= j {
                        continue;
                    }
                    let (si, sj) = (panel.site(i), panel.site(j));
                    if (sj - si).norm() > scheme.delta_s {
                        continue;
                    }
                    // Canonical representative at lag zero: site
                    // coordinates in lexicographic order.
                    let (a, b) = if k == 0 && site_key(sj) < site_key(si) {
                        (j, i)
                    } else {
                        (i, j)
                    };
                    templates.push(TemplateGeom {
                        site_i: a,
                        site_j: b,
                        lag_steps: k,
                        offset: panel.site(b) - panel.site(a),
                        time_lag: k as f64 * step,
                    });
                }
            }
        }
        templates.sort_by(|u, v| {
            let ku = (
                u.lag_steps,
                site_key(panel_site(panel, u.site_i)),
                site_key(panel_site(panel, u.site_j)),
                u.site_i,
                u.site_j,
            );
            let kv = (
                v.lag_steps,
                site_key(panel_site(panel, v.site_i)),
                site_key(panel_site(panel, v.site_j)),
                v.site_i,
                v.site_j,
            );
            ku.partial_cmp(&kv).expect("finite site coordinates")
        });
        Ok(PairTemplates {
            templates,
            time_step: step,
        })
    }

    pub fn templates(&self) -> &[TemplateGeom] {
        &self.templates
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

fn site_key(s: Vector2<f64>) -> (f64, f64) {
    (s.x, s.y)
}

fn panel_site(panel: &ExceedancePanel, i: usize) -> Vector2<f64> {
    panel.site(i)
}

/// Censoring-case buckets of the observations under one template. The
/// `(+,0)` and `(0,+)` cases share one bucket: both pair members have the
/// same marginal law and equal-volume kernels, so the two mixed densities
/// coincide as functions of the positive value.
#[derive(Debug, Clone, Default)]
pub struct TemplateBucket {
    /// Count of fully censored pairs.
    pub n00: u64,
    /// Positive member values of partially censored pairs, in time order.
    pub singles: Vec<f64>,
    /// Doubly positive pairs stored as (min, max), in time order.
    pub joints: Vec<(f64, f64)>,
}

impl TemplateBucket {
    pub fn n_pairs(&self) -> u64 {
        self.n00 + self.singles.len() as u64 + self.joints.len() as u64
    }
}

/// Pair templates plus per-template censoring buckets for one panel.
/// Built once per (panel, scheme); likelihood evaluations iterate this.
#[derive(Debug, Clone)]
pub struct PairCache {
    templates: PairTemplates,
    buckets: Vec<TemplateBucket>,
    n_times: usize,
    n_pair_obs: u64,
}

impl PairCache {
    pub fn build(panel: &ExceedancePanel, scheme: &PairScheme) -> Result<Self> {
        let templates = PairTemplates::build(panel, scheme)?;
        let t_len = panel.n_times();
        let mut buckets = Vec::with_capacity(templates.len());
        let mut n_pair_obs = 0u64;
        for tpl in templates.templates() {
            let mut bucket = TemplateBucket::default();
            let k = tpl.lag_steps;
            for t in 0..t_len.saturating_sub(k) {
                if panel.is_missing(tpl.site_i, t) || panel.is_missing(tpl.site_j, t + k) {
                    continue;
                }
                let y1 = panel.value(tpl.site_i, t);
                let y2 = panel.value(tpl.site_j, t + k);
                match (y1 > 0.0, y2 > 0.0) {
                    (false, false) => bucket.n00 += 1,
                    (true, false) => bucket.singles.push(y1),
                    (false, true) => bucket.singles.push(y2),
                    (true, true) => {
                        bucket.joints.push(if y1 <= y2 { (y1, y2) } else { (y2, y1) })
                    }
                }
            }
            n_pair_obs += bucket.n_pairs();
            buckets.push(bucket);
        }
        if n_pair_obs == 0 {
            return Err(Error::Data(
                "no retained pairs: check cutoffs, mask and panel size".into(),
            ));
        }
        Ok(PairCache {
            templates,
            buckets,
            n_times: t_len,
            n_pair_obs,
        })
    }

    pub fn templates(&self) -> &PairTemplates {
        &self.templates
    }

    pub fn buckets(&self) -> &[TemplateBucket] {
        &self.buckets
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// Total number of retained pair observations (both members present).
    pub fn n_pair_obs(&self) -> u64 {
        self.n_pair_obs
    }

    /// Cache with every stored positive value mapped through `f` (used by
    /// models that evaluate on a transformed scale, e.g. Gaussian scores).
    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> PairCache {
        let buckets = self
            .buckets
            .iter()
            .map(|b| TemplateBucket {
                n00: b.n00,
                singles: b.singles.iter().map(|&y| f(y)).collect(),
                joints: b
                    .joints
                    .iter()
                    .map(|&(a, b2)| {
                        let (fa, fb) = (f(a), f(b2));
                        if fa <= fb {
                            (fa, fb)
                        } else {
                            (fb, fa)
                        }
                    })
                    .collect(),
            })
            .collect();
        PairCache {
            templates: self.templates.clone(),
            buckets,
            n_times: self.n_times,
            n_pair_obs: self.n_pair_obs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(values: Vec<f64>, missing: Vec<bool>, sites: Vec<Vector2<f64>>, t: usize) -> ExceedancePanel {
        let times: Vec<f64> = (0..t).map(|i| i as f64).collect();
        ExceedancePanel::new(sites, times, values, missing).unwrap()
    }

    #[test]
    fn single_site_two_times_one_template() {
        // One site, T = 2, delta_t = 1: exactly the one lag-1 self pair.
        let p = panel(vec![0.3, 0.0], vec![false, false], vec![Vector2::zeros()], 2);
        let cache = PairCache::build(&p, &PairScheme::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(cache.templates().len(), 1);
        let tpl = cache.templates().templates()[0];
        assert_eq!((tpl.site_i, tpl.site_j, tpl.lag_steps), (0, 0, 1));
        assert_eq!(cache.n_pair_obs(), 1);
        assert_eq!(cache.buckets()[0].singles.len(), 1);
    }

    #[test]
    fn lag_zero_pairs_deduplicated_and_cutoff_inclusive() {
        let sites = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(3.0, 0.0),
        ];
        let p = panel(vec![0.0; 3], vec![false; 3], sites, 1);
        // cutoff exactly 1: pair (0,1) kept (tie included), (0,2),(1,2) dropped
        let cache = PairCache::build(&p, &PairScheme::new(1.0, 0).unwrap()).unwrap();
        assert_eq!(cache.templates().len(), 1);
        assert_eq!(cache.buckets()[0].n00, 1);
    }

    #[test]
    fn both_directions_kept_at_positive_lag() {
        let sites = vec![Vector2::new(0.0, 0.0), Vector2::new(0.5, 0.0)];
        let p = panel(vec![0.0; 4], vec![false; 4], sites, 2);
        let cache = PairCache::build(&p, &PairScheme::new(2.0, 1).unwrap()).unwrap();
        // lag 0: one pair; lag 1: (0,1), (1,0), (0,0), (1,1)
        assert_eq!(cache.templates().len(), 5);
    }

    #[test]
    fn missing_member_drops_pair() {
        let sites = vec![Vector2::new(0.0, 0.0), Vector2::new(0.5, 0.0)];
        let mut p = panel(vec![1.0, 2.0, 3.0, 4.0], vec![false; 4], sites, 2);
        let full = PairCache::build(&p, &PairScheme::new(2.0, 1).unwrap()).unwrap();
        p.set_missing(1, 1);
        let masked = PairCache::build(&p, &PairScheme::new(2.0, 1).unwrap()).unwrap();
        assert!(masked.n_pair_obs() < full.n_pair_obs());
        // pairs not involving (site 1, t 1) unchanged
        assert_eq!(masked.buckets()[0].n_pairs(), 1); // lag-0 pair at t=0 only... t=1 involves site1
    }

    #[test]
    fn no_pairs_is_an_error() {
        let sites = vec![Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0)];
        let p = panel(vec![0.0, 0.0], vec![false, false], sites, 1);
        assert!(PairCache::build(&p, &PairScheme::new(1.0, 0).unwrap()).is_err());
    }
}
