use nalgebra::Vector2;

use crate::{Error, Result};

/// An S x T panel of censored excesses on the transformed scale with a
/// missing-value mask. Zero encodes "below threshold"; positive values are
/// the excess.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedancePanel {
    sites: Vec<Vector2<f64>>,
    times: Vec<f64>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl ExceedancePanel {
    pub fn new(
        sites: Vec<Vector2<f64>>,
        times: Vec<f64>,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let (s, t) = (sites.len(), times.len());
        if s == 0 || t == 0 {
            return Err(Error::Data("panel must have at least one site and time".into()));
        }
        if values.len() != s * t || missing.len() != s * t {
            return Err(Error::Data(format!(
                "panel shape mismatch: {s} sites x {t} times vs {} values, {} mask entries",
                values.len(),
                missing.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("times must be strictly increasing".into()));
        }
        if sites.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::Data("non-finite site coordinate".into()));
        }
        for (idx, (&v, &m)) in values.iter().zip(&missing).enumerate() {
            if !m && !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-missing value at flat index {idx} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(ExceedancePanel {
            sites,
            times,
            values,
            missing,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn sites(&self) -> &[Vector2<f64>] {
        &self.sites
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn site(&self, i: usize) -> Vector2<f64> {
        self.sites[i]
    }

    #[inline]
    pub fn value(&self, site: usize, time: usize) -> f64 {
        self.values[site * self.times.len() + time]
    }

    #[inline]
    pub fn is_missing(&self, site: usize, time: usize) -> bool {
        self.missing[site * self.times.len() + time]
    }

    /// Sets one cell to missing (test and ingestion support).
    pub fn set_missing(&mut self, site: usize, time: usize) {
        let idx = site * self.times.len() + time;
        self.missing[idx] = true;
        self.values[idx] = 0.0;
    }

    /// Grid step when the time grid is uniform (relative tolerance 1e-9).
    pub fn time_step(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::Data("time step undefined for a single time".into()));
        }
        let h = self.times[1] - self.times[0];
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs() {
                return Err(Error::Data(
                    "pairwise likelihood requires a uniformly spaced time grid".into(),
                ));
            }
        }
        Ok(h)
    }

    /// Fraction of missing cells per site.
    pub fn missing_fraction(&self, site: usize) -> f64 {
        let t = self.times.len();
        let miss = (0..t).filter(|&j| self.is_missing(site, j)).count();
        miss as f64 / t as f64
    }

    /// New panel whose columns are `self`'s columns at `index` (bootstrap
    /// resampling); the time grid stays the original one and the mask
    /// travels with the data.
    pub fn resample_times(&self, index: &[usize]) -> Result<ExceedancePanel> {
        if index.len() != self.times.len() {
            return Err(Error::Data("resample index length must equal n_times".into()));
        }
        let (s, t) = (self.sites.len(), self.times.len());
        let mut values = vec![0.0; s * t];
        let mut missing = vec![false; s * t];
        for (new_t, &src_t) in index.iter().enumerate() {
            if src_t >= t {
                return Err(Error::Data(format!("resample index {src_t} out of range")));
            }
            for i in 0..s {
                values[i * t + new_t] = self.values[i * t + src_t];
                missing[i * t + new_t] = self.missing[i * t + src_t];
            }
        }
        Ok(ExceedancePanel {
            sites: self.sites.clone(),
            times: self.times.clone(),
            values,
            missing,
        })
    }

    /// Panel restricted to a site subset (indices keep their order).
    pub fn select_sites(&self, keep: &[usize]) -> Result<ExceedancePanel> {
        let t = self.times.len();
        let mut sites = Vec::with_capacity(keep.len());
        let mut values = Vec::with_capacity(keep.len() * t);
        let mut missing = Vec::with_capacity(keep.len() * t);
        for &i in keep {
            if i >= self.sites.len() {
                return Err(Error::Data(format!("site index {i} out of range")));
            }
            sites.push(self.sites[i]);
            values.extend_from_slice(&self.values[i * t..(i + 1) * t]);
            missing.extend_from_slice(&self.missing[i * t..(i + 1) * t]);
        }
        ExceedancePanel::new(sites, self.times.clone(), values, missing)
    }
}
