//! Simulation of the latent Gamma random measure and the observable
//! censored exceedance panel.
//!
//! The Gamma measure is generated as a truncated shot-noise series: atom
//! masses follow the Gamma Levy density restricted above a truncation level
//! (inverted through the exponential-integral tail), locations are uniform
//! over a window padded by the kernel extent, and the mean of the truncated
//! small-atom dust is restored by a deterministic uniform compensation, so
//! that the expected measure of every region is exact.
//!
//! # Random-number stream layout (version 1)
//!
//! All draws come from ChaCha8 seeded with the design seed; substreams make
//! parallel generation reproducible regardless of the thread count:
//! stream 0 is reserved, streams `1..=n_cells` generate the atoms of the
//! time-sliced window cells, and stream `2^32 + i` drives the exceedance and
//! excess draws of design point `i` (site-major order).

mod expint;

pub use expint::{e1, e1_inv};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::geometry::SpaceTimePoint;
use crate::likelihood::ExceedancePanel;
use crate::model::{marginal_transform, ModelParams};
use crate::{Error, Result};

/// Stream indices of the versioned RNG layout.
const POINT_STREAM_BASE: u64 = 1 << 32;
/// Target expected atom count per generation cell.
const ATOMS_PER_CELL: f64 = 50_000.0;

/// A box in space-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub s_min: Vector2<f64>,
    pub s_max: Vector2<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl Window {
    pub fn new(s_min: Vector2<f64>, s_max: Vector2<f64>, t_min: f64, t_max: f64) -> Result<Self> {
        let ok = s_min.x < s_max.x && s_min.y < s_max.y && t_min < t_max;
        let finite = [s_min.x, s_min.y, s_max.x, s_max.y, t_min, t_max]
            .iter()
            .all(|v| v.is_finite());
        if !(ok && finite) {
            return Err(Error::Data("degenerate or non-finite window".into()));
        }
        Ok(Window {
            s_min,
            s_max,
            t_min,
            t_max,
        })
    }

    pub fn volume(&self) -> f64 {
        (self.s_max.x - self.s_min.x) * (self.s_max.y - self.s_min.y) * (self.t_max - self.t_min)
    }

    /// Pads spatially by the kernel's maximal drift plus ellipse reach and
    /// forward in time by the duration, so every cylinder anchored in
    /// `self` is covered.
    pub fn padded_for(&self, p: &ModelParams) -> Window {
        let k = &p.kernel;
        let reach = k.ellipse().semi_x().max(k.ellipse().semi_y())
            + k.duration() * k.velocity().norm();
        Window {
            s_min: self.s_min - Vector2::new(reach, reach),
            s_max: self.s_max + Vector2::new(reach, reach),
            t_min: self.t_min,
            t_max: self.t_max + k.duration(),
        }
    }

    fn contains(&self, s: Vector2<f64>, t: f64) -> bool {
        s.x >= self.s_min.x
            && s.x <= self.s_max.x
            && s.y >= self.s_min.y
            && s.y <= self.s_max.y
            && t >= self.t_min
            && t <= self.t_max
    }
}

/// One atom of the truncated Gamma measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub s: Vector2<f64>,
    pub t: f64,
    pub mass: f64,
}

/// Truncated shot-noise representation of the Gamma random measure over a
/// padded window, with the mean of the truncated dust carried as a uniform
/// density.
#[derive(Debug, Clone)]
pub struct GammaAtomSet {
    /// Atoms sorted by time stamp.
    atoms: Vec<Atom>,
    window: Window,
    design: Window,
    epsilon: f64,
    /// Mass density (per unit volume) restoring the truncated mean.
    compensation_density: f64,
}

impl GammaAtomSet {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn design_window(&self) -> &Window {
        &self.design
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn compensation_density(&self) -> f64 {
        self.compensation_density
    }

    /// Measure of a sub-box: atom masses inside plus compensation.
    pub fn measure_of(&self, b: &Window) -> f64 {
        let lo = self.atoms.partition_point(|a| a.t < b.t_min);
        let mut total = 0.0;
        for a in &self.atoms[lo..] {
            if a.t > b.t_max {
                break;
            }
            if b.contains(a.s, a.t) {
                total += a.mass;
            }
        }
        total + self.compensation_density * b.volume()
    }
}

/// Default truncation level: expected truncated mass fraction 1e-3.
pub fn default_truncation(p: &ModelParams) -> f64 {
    1e-3 / p.beta
}

/// Samples the truncated Gamma measure over the design window padded by the
/// kernel extent. Fails when the truncation level would discard more than
/// 10% of the expected mass.
pub fn simulate_gamma_measure(
    design: &Window,
    p: &ModelParams,
    epsilon: f64,
    seed: u64,
) -> Result<GammaAtomSet> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!(
            "truncation level must be positive, got {epsilon}"
        )));
    }
    let truncated_fraction = -(-p.beta * epsilon).exp_m1();
    if truncated_fraction > 0.10 {
        return Err(Error::Parameter(format!(
            "truncation level {epsilon} would discard {:.1}% of the expected mass",
            100.0 * truncated_fraction
        )));
    }
    let window = design.padded_for(p);
    let base_intensity = p.alpha / p.kernel.base_volume();
    // Expected atoms per unit volume above the truncation level.
    let tail = e1(p.beta * epsilon);
    let rate = base_intensity * tail;
    let expected_atoms = rate * window.volume();

    let n_cells = ((expected_atoms / ATOMS_PER_CELL).ceil() as usize).clamp(1, 65_536);
    let dt = (window.t_max - window.t_min) / n_cells as f64;
    let cell_volume = window.volume() / n_cells as f64;

    let mut cells: Vec<Vec<Atom>> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + c as u64);
            let n = Poisson::new(rate * cell_volume)
                .expect("positive Poisson rate")
                .sample(&mut rng) as usize;
            let t_lo = window.t_min + c as f64 * dt;
            let mut atoms = Vec::with_capacity(n);
            for _ in 0..n {
                // Conditional tail inversion: E1(beta m) = u E1(beta eps).
                let u: f64 = rng.gen();
                let mass = e1_inv(u.max(1e-300) * tail) / p.beta;
                let s = Vector2::new(
                    window.s_min.x + (window.s_max.x - window.s_min.x) * rng.gen::<f64>(),
                    window.s_min.y + (window.s_max.y - window.s_min.y) * rng.gen::<f64>(),
                );
                let t = t_lo + dt * rng.gen::<f64>();
                atoms.push(Atom { s, t, mass });
            }
            atoms
        })
        .collect();

    let mut atoms: Vec<Atom> = cells.drain(..).flatten().collect();
    atoms.sort_by(|a, b| {
        (a.t, a.s.x, a.s.y, a.mass)
            .partial_cmp(&(b.t, b.s.x, b.s.y, b.mass))
            .expect("finite atoms")
    });

    // Uniform mean compensation for the truncated dust:
    // E dust per unit volume = base_intensity (1 - e^{-beta eps}) / beta.
    let compensation_density = base_intensity * truncated_fraction / p.beta;

    Ok(GammaAtomSet {
        atoms,
        window,
        design: *design,
        epsilon,
        compensation_density,
    })
}

/// Latent field value: total Gamma mass captured by the cylinder anchored
/// at `x`. The point must lie in the design window covered by the atoms.
pub fn latent_field(atoms: &GammaAtomSet, x: &SpaceTimePoint, p: &ModelParams) -> Result<f64> {
    let d = &atoms.design;
    let slack = 1e-9;
    if !(x.s.x >= d.s_min.x - slack
        && x.s.x <= d.s_max.x + slack
        && x.s.y >= d.s_min.y - slack
        && x.s.y <= d.s_max.y + slack
        && x.t >= d.t_min - slack
        && x.t <= d.t_max + slack)
    {
        return Err(Error::Domain(format!(
            "point ({}, {}, {}) outside the simulated design window",
            x.s.x, x.s.y, x.t
        )));
    }
    let k = &p.kernel;
    let delta = k.duration();
    let ellipse = k.ellipse();
    let vel = k.velocity();

    let list = &atoms.atoms;
    let lo = list.partition_point(|a| a.t < x.t);
    let mut total = 0.0;
    for a in &list[lo..] {
        if a.t > x.t + delta {
            break;
        }
        let center = x.s + (a.t - x.t) * vel;
        let local = a.s - center;
        if ellipse.at_center(Vector2::zeros()).contains(local) {
            total += a.mass;
        }
    }
    Ok(total + atoms.compensation_density * k.base_volume())
}

/// Site/time design with the seed of the reproducible RNG stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDesign {
    pub sites: Vec<Vector2<f64>>,
    pub times: Vec<f64>,
    pub seed: u64,
}

impl SimulationDesign {
    pub fn new(sites: Vec<Vector2<f64>>, times: Vec<f64>, seed: u64) -> Result<Self> {
        if sites.is_empty() || times.is_empty() {
            return Err(Error::Data("design must have sites and times".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("design times must be strictly increasing".into()));
        }
        Ok(SimulationDesign { sites, times, seed })
    }

    /// Bounding window of the design points.
    pub fn window(&self) -> Window {
        let mut s_min = self.sites[0];
        let mut s_max = self.sites[0];
        for s in &self.sites {
            s_min.x = s_min.x.min(s.x);
            s_min.y = s_min.y.min(s.y);
            s_max.x = s_max.x.max(s.x);
            s_max.y = s_max.y.max(s.y);
        }
        // Degenerate extents are widened a hair so the box is a valid window.
        let eps = 1e-9;
        Window {
            s_min: s_min - Vector2::new(eps, eps),
            s_max: s_max + Vector2::new(eps, eps),
            t_min: self.times[0] - eps,
            t_max: *self.times.last().unwrap() + eps,
        }
    }
}

/// Anything that can simulate an exceedance panel on a design (used by the
/// parametric-bootstrap goodness-of-fit machinery).
pub trait PanelSimulator: Sync {
    fn simulate(&self, design: &SimulationDesign) -> Result<ExceedancePanel>;
    fn label(&self) -> String;
}

impl PanelSimulator for ModelParams {
    fn simulate(&self, design: &SimulationDesign) -> Result<ExceedancePanel> {
        simulate_panel(design, self)
    }

    fn label(&self) -> String {
        "hierarchical".into()
    }
}

/// Simulates the censored exceedance panel: latent Gamma field by shot
/// noise, exceedance indicators with probability `exp(-kappa L)`, excesses
/// exponential with rate `L`, then the marginal transform.
pub fn simulate_panel(design: &SimulationDesign, p: &ModelParams) -> Result<ExceedancePanel> {
    let atoms = simulate_gamma_measure(&design.window(), p, default_truncation(p), design.seed)?;
    simulate_panel_with(&atoms, design, p)
}

/// Panel simulation reusing an existing atom set (the design must be
/// covered by the atom window).
pub fn simulate_panel_with(
    atoms: &GammaAtomSet,
    design: &SimulationDesign,
    p: &ModelParams,
) -> Result<ExceedancePanel> {
    let s_len = design.sites.len();
    let t_len = design.times.len();
    let identity = p.identity_margins();

    let values: Vec<f64> = (0..s_len * t_len)
        .into_par_iter()
        .map(|idx| -> Result<f64> {
            let (i, j) = (idx / t_len, idx % t_len);
            let x = SpaceTimePoint::new(design.sites[i], design.times[j])
                .map_err(|e| Error::Data(e.to_string()))?;
            let lambda = latent_field(atoms, &x, p)?;
            let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
            rng.set_stream(POINT_STREAM_BASE + idx as u64);
            let u_exceed: f64 = rng.gen();
            if u_exceed >= (-p.kappa * lambda).exp() {
                return Ok(0.0);
            }
            let u: f64 = rng.gen();
            let excess = -(1.0 - u).ln() / lambda;
            if identity {
                Ok(excess)
            } else {
                marginal_transform(excess, p)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    ExceedancePanel::new(
        design.sites.clone(),
        design.times.clone(),
        values,
        vec![false; s_len * t_len],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CylinderKernel;

    fn params() -> ModelParams {
        let k = CylinderKernel::new(0.2, 0.2, 0.0, 5.0, Vector2::zeros()).unwrap();
        ModelParams::standard(k, 9.0).unwrap()
    }

    #[test]
    fn padding_covers_kernel() {
        let k = CylinderKernel::new(0.2, 0.3, 0.5, 5.0, Vector2::new(0.05, 0.1)).unwrap();
        let p = ModelParams::standard(k, 9.0).unwrap();
        let d = Window::new(Vector2::zeros(), Vector2::new(1.0, 1.0), 0.0, 10.0).unwrap();
        let w = d.padded_for(&p);
        let reach = 0.3 + 5.0 * (0.05f64 * 0.05 + 0.1 * 0.1).sqrt();
        assert!((w.s_min.x - (-reach)).abs() < 1e-12);
        assert!((w.t_max - 15.0).abs() < 1e-12);
        assert_eq!(w.t_min, 0.0);
    }

    #[test]
    fn oversized_truncation_rejected() {
        let p = params();
        let d = Window::new(Vector2::zeros(), Vector2::new(1.0, 1.0), 0.0, 10.0).unwrap();
        // fraction 1 - e^{-0.2} > 10%
        assert!(simulate_gamma_measure(&d, &p, 0.2, 1).is_err());
        assert!(simulate_gamma_measure(&d, &p, -1.0, 1).is_err());
    }

    #[test]
    fn atom_generation_deterministic_across_thread_counts() {
        let p = params();
        let d = Window::new(Vector2::zeros(), Vector2::new(1.0, 1.0), 0.0, 50.0).unwrap();
        let pools: Vec<rayon::ThreadPool> = [1usize, 4]
            .iter()
            .map(|&n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap())
            .collect();
        let sets: Vec<GammaAtomSet> = pools
            .iter()
            .map(|pool| {
                pool.install(|| simulate_gamma_measure(&d, &p, default_truncation(&p), 7).unwrap())
            })
            .collect();
        assert_eq!(sets[0].atoms().len(), sets[1].atoms().len());
        for (a, b) in sets[0].atoms().iter().zip(sets[1].atoms()) {
            assert_eq!(a.mass.to_bits(), b.mass.to_bits());
            assert_eq!(a.t.to_bits(), b.t.to_bits());
        }
    }

    #[test]
    fn panel_reproducible_bitwise() {
        let p = params();
        let design = SimulationDesign::new(
            vec![Vector2::new(0.2, 0.2), Vector2::new(0.7, 0.6)],
            (0..40).map(|t| t as f64).collect(),
            99,
        )
        .unwrap();
        let a = simulate_panel(&design, &p).unwrap();
        let b = simulate_panel(&design, &p).unwrap();
        for i in 0..2 {
            for t in 0..40 {
                assert_eq!(a.value(i, t).to_bits(), b.value(i, t).to_bits());
            }
        }
    }

    #[test]
    fn latent_field_outside_window_rejected() {
        let p = params();
        let d = Window::new(Vector2::zeros(), Vector2::new(1.0, 1.0), 0.0, 10.0).unwrap();
        let atoms = simulate_gamma_measure(&d, &p, default_truncation(&p), 3).unwrap();
        let inside = SpaceTimePoint::xy_t(0.5, 0.5, 5.0).unwrap();
        assert!(latent_field(&atoms, &inside, &p).is_ok());
        let outside = SpaceTimePoint::xy_t(5.0, 0.5, 5.0).unwrap();
        assert!(latent_field(&atoms, &outside, &p).is_err());
    }

    #[test]
    fn measure_mean_close_to_gamma_mean() {
        // E Gamma(B) = alpha(B)/beta exactly thanks to mean compensation.
        let p = params();
        let d = Window::new(Vector2::zeros(), Vector2::new(0.5, 0.5), 0.0, 20.0).unwrap();
        let sub = Window::new(
            Vector2::new(0.1, 0.1),
            Vector2::new(0.4, 0.4),
            2.0,
            17.0,
        )
        .unwrap();
        let n = 300;
        let mut vals = Vec::with_capacity(n);
        for seed in 0..n {
            let atoms = simulate_gamma_measure(&d, &p, default_truncation(&p), seed as u64).unwrap();
            vals.push(atoms.measure_of(&sub));
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let expect = p.alpha / p.kernel.base_volume() * sub.volume() / p.beta;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} vs {expect} (se {se})"
        );
    }
}
