use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use super::density::PairDensityModel;
use super::objective::pairwise_loglik;
use super::pairs::PairCache;
use crate::geometry::CylinderKernel;
use crate::model::ModelParams;
use crate::opt::{nelder_mead, SimplexOptions};
use crate::{Error, Result};

/// The free parameters of the hierarchical model, by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    SemiX,
    SemiY,
    Rotation,
    Duration,
    VelocityX,
    VelocityY,
    Alpha,
    Beta,
    Kappa,
    SigmaStar,
    XiStar,
}

impl ParamId {
    pub fn name(self) -> &'static str {
        match self {
            ParamId::SemiX => "semi_x",
            ParamId::SemiY => "semi_y",
            ParamId::Rotation => "rotation",
            ParamId::Duration => "duration",
            ParamId::VelocityX => "velocity_x",
            ParamId::VelocityY => "velocity_y",
            ParamId::Alpha => "alpha",
            ParamId::Beta => "beta",
            ParamId::Kappa => "kappa",
            ParamId::SigmaStar => "sigma_star",
            ParamId::XiStar => "xi_star",
        }
    }

    /// Positive parameters are optimized on the log scale.
    pub fn log_scaled(self) -> bool {
        !matches!(
            self,
            ParamId::Rotation | ParamId::VelocityX | ParamId::VelocityY | ParamId::XiStar
        )
    }

    fn default_step(self) -> f64 {
        match self {
            ParamId::Rotation => 0.25,
            ParamId::VelocityX | ParamId::VelocityY => 0.05,
            ParamId::XiStar => 0.1,
            _ => 0.15, // log scale: ~15% multiplicative
        }
    }

    fn default_bounds(self) -> (f64, f64) {
        match self {
            ParamId::SemiX | ParamId::SemiY => (1e-4, 1e4),
            ParamId::Rotation => (f64::NEG_INFINITY, f64::INFINITY), // wrapped
            ParamId::Duration => (1e-3, 1e6),
            ParamId::VelocityX | ParamId::VelocityY => (-1e4, 1e4),
            ParamId::Alpha | ParamId::Beta | ParamId::Kappa => (1e-8, 1e8),
            ParamId::SigmaStar => (1e-8, 1e8),
            ParamId::XiStar => (-5.0, 5.0),
        }
    }

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            ParamId::SemiX => p.kernel.ellipse().semi_x(),
            ParamId::SemiY => p.kernel.ellipse().semi_y(),
            ParamId::Rotation => p.kernel.ellipse().rotation(),
            ParamId::Duration => p.kernel.duration(),
            ParamId::VelocityX => p.kernel.velocity().x,
            ParamId::VelocityY => p.kernel.velocity().y,
            ParamId::Alpha => p.alpha,
            ParamId::Beta => p.beta,
            ParamId::Kappa => p.kappa,
            ParamId::SigmaStar => p.sigma_star,
            ParamId::XiStar => p.xi_star,
        }
    }

    pub fn set(self, p: &ModelParams, value: f64) -> Result<ModelParams> {
        let k = &p.kernel;
        let (mut sx, mut sy, mut rot, mut dur, mut vel) = (
            k.ellipse().semi_x(),
            k.ellipse().semi_y(),
            k.ellipse().rotation(),
            k.duration(),
            k.velocity(),
        );
        let (mut alpha, mut beta, mut kappa, mut sigma, mut xi) =
            (p.alpha, p.beta, p.kappa, p.sigma_star, p.xi_star);
        match self {
            ParamId::SemiX => sx = value,
            ParamId::SemiY => sy = value,
            ParamId::Rotation => rot = value.rem_euclid(PI),
            ParamId::Duration => dur = value,
            ParamId::VelocityX => vel.x = value,
            ParamId::VelocityY => vel.y = value,
            ParamId::Alpha => alpha = value,
            ParamId::Beta => beta = value,
            ParamId::Kappa => kappa = value,
            ParamId::SigmaStar => sigma = value,
            ParamId::XiStar => xi = value,
        }
        ModelParams::new(
            CylinderKernel::new(sx, sy, rot, dur, vel)?,
            alpha,
            beta,
            kappa,
            sigma,
            xi,
        )
    }
}

/// Box bounds on the natural scale, with per-parameter defaults.
#[derive(Debug, Clone, Default)]
pub struct ParamBounds {
    overrides: Vec<(ParamId, f64, f64)>,
}

impl ParamBounds {
    pub fn with(mut self, id: ParamId, lo: f64, hi: f64) -> Self {
        self.overrides.push((id, lo, hi));
        self
    }

    pub fn get(&self, id: ParamId) -> (f64, f64) {
        self.overrides
            .iter()
            .rev()
            .find(|(pid, _, _)| *pid == id)
            .map(|&(_, lo, hi)| (lo, hi))
            .unwrap_or_else(|| id.default_bounds())
    }
}

/// A reparameterized, bounded parameter space over some pair-density model.
pub trait ParamSpace: Sync {
    type Model: PairDensityModel + Clone + Send + Sync;

    fn names(&self) -> Vec<&'static str>;
    fn dim(&self) -> usize {
        self.names().len()
    }
    /// Natural parameter values of the free coordinates.
    fn natural(&self, m: &Self::Model) -> Vec<f64>;
    /// Natural -> unconstrained.
    fn pack(&self, m: &Self::Model) -> Vec<f64>;
    /// Unconstrained -> model; out-of-bounds points are a rejected region.
    fn unpack(&self, eta: &[f64]) -> Result<Self::Model>;
    /// |d natural / d eta| at `m`, for delta-method standard errors.
    fn scale_to_natural(&self, m: &Self::Model) -> Vec<f64>;
    fn default_steps(&self) -> Vec<f64>;
}

/// Hierarchical-model parameter space: a base parameter set supplies the
/// fixed coordinates; `free` lists the optimized ones.
#[derive(Debug, Clone)]
pub struct HierParamSpace {
    pub base: ModelParams,
    pub free: Vec<ParamId>,
    pub bounds: ParamBounds,
}

impl HierParamSpace {
    pub fn new(base: ModelParams, free: Vec<ParamId>) -> Self {
        HierParamSpace {
            base,
            free,
            bounds: ParamBounds::default(),
        }
    }

    /// The six dependence parameters of the moving-cylinder kernel.
    pub fn dependence(base: ModelParams) -> Self {
        Self::new(
            base,
            vec![
                ParamId::SemiX,
                ParamId::SemiY,
                ParamId::Rotation,
                ParamId::Duration,
                ParamId::VelocityX,
                ParamId::VelocityY,
            ],
        )
    }
}

impl ParamSpace for HierParamSpace {
    type Model = ModelParams;

    fn names(&self) -> Vec<&'static str> {
        self.free.iter().map(|id| id.name()).collect()
    }

    fn natural(&self, m: &ModelParams) -> Vec<f64> {
        self.free.iter().map(|id| id.get(m)).collect()
    }

    fn pack(&self, m: &ModelParams) -> Vec<f64> {
        self.free
            .iter()
            .map(|id| {
                let v = id.get(m);
                if id.log_scaled() {
                    v.ln()
                } else {
                    v
                }
            })
            .collect()
    }

    fn unpack(&self, eta: &[f64]) -> Result<ModelParams> {
        let mut m = self.base;
        for (id, &e) in self.free.iter().zip(eta) {
            let v = if id.log_scaled() { e.exp() } else { e };
            if !v.is_finite() {
                return Err(Error::ParamRegion(format!("{} overflowed", id.name())));
            }
            let (lo, hi) = self.bounds.get(*id);
            if v < lo || v > hi {
                return Err(Error::ParamRegion(format!(
                    "{} = {v} outside [{lo}, {hi}]",
                    id.name()
                )));
            }
            m = id.set(&m, v)?;
        }
        Ok(m)
    }

    fn scale_to_natural(&self, m: &ModelParams) -> Vec<f64> {
        self.free
            .iter()
            .map(|id| if id.log_scaled() { id.get(m).abs() } else { 1.0 })
            .collect()
    }

    fn default_steps(&self) -> Vec<f64> {
        self.free.iter().map(|id| id.default_step()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_eval: usize,
    pub ftol_rel: f64,
    pub xtol_abs: f64,
    /// Number of optimizer starts; the first is the supplied initial point,
    /// the rest perturb it (seeded).
    pub n_starts: usize,
    pub start_spread: f64,
    pub seed: u64,
    /// Per-free-parameter initial simplex steps (unconstrained scale).
    pub steps: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_eval: 4000,
            ftol_rel: 1e-9,
            xtol_abs: 1e-7,
            n_starts: 1,
            start_spread: 0.3,
            seed: 0,
            steps: None,
        }
    }
}

/// Maximum pairwise-likelihood fit result. Godambe and information-criterion
/// blocks are attached by the corresponding estimators.
#[derive(Debug, Clone)]
pub struct FitResult<M> {
    pub model: M,
    pub free_names: Vec<&'static str>,
    /// Estimates on the natural scale, aligned with `free_names`.
    pub estimates: Vec<f64>,
    /// Estimates on the unconstrained optimizer scale.
    pub eta: Vec<f64>,
    pub pl: f64,
    pub converged: bool,
    pub n_eval: usize,
    /// Best objective value per accepted iteration (maximization scale).
    pub trace: Vec<f64>,
    pub n_pair_obs: u64,
    pub godambe: Option<super::godambe::GodambeInfo>,
    pub clic: Option<super::godambe::ClicInfo>,
}

/// Maximizes the censored pairwise log-likelihood over `space` starting at
/// `init`. Non-convergence is reported through the `converged` flag with the
/// best point so far; an inadmissible start is an error.
pub fn fit_model<S: ParamSpace>(
    cache: &PairCache,
    space: &S,
    init: &S::Model,
    opts: &FitOptions,
) -> Result<FitResult<S::Model>> {
    let objective = |eta: &[f64]| -> Option<f64> {
        let model = space.unpack(eta).ok()?;
        pairwise_loglik(cache, &model).ok().map(|pl| -pl)
    };

    let eta0 = space.pack(init);
    let steps = opts.steps.clone().unwrap_or_else(|| space.default_steps());
    if steps.len() != eta0.len() {
        return Err(Error::Parameter(format!(
            "expected {} simplex steps, got {}",
            eta0.len(),
            steps.len()
        )));
    }
    let mut nm_opts = SimplexOptions::new(steps.clone());
    nm_opts.max_eval = opts.max_eval;
    nm_opts.ftol_rel = opts.ftol_rel;
    nm_opts.xtol_abs = opts.xtol_abs;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<crate::opt::SimplexResult> = None;
    for start in 0..opts.n_starts.max(1) {
        let eta_start: Vec<f64> = if start == 0 {
            eta0.clone()
        } else {
            eta0.iter()
                .map(|&e| e + opts.start_spread * (2.0 * rng.gen::<f64>() - 1.0))
                .collect()
        };
        if let Some(res) = nelder_mead(objective, &eta_start, &nm_opts) {
            let better = best.as_ref().map_or(true, |b| res.f < b.f);
            if better {
                best = Some(res);
            }
        } else if start == 0 {
            return Err(Error::ParamRegion(
                "initial parameter point rejected by the likelihood".into(),
            ));
        }
    }
    let res = best.ok_or_else(|| Error::NoConvergence("no admissible start".into()))?;

    let model = space.unpack(&res.x)?;
    Ok(FitResult {
        free_names: space.names(),
        estimates: space.natural(&model),
        eta: res.x,
        pl: -res.f,
        converged: res.converged,
        n_eval: res.n_eval,
        trace: res.trace.iter().map(|f| -f).collect(),
        n_pair_obs: cache.n_pair_obs(),
        godambe: None,
        clic: None,
        model,
    })
}

/// Convenience wrapper for the hierarchical family.
pub fn fit_hierarchical(
    cache: &PairCache,
    space: &HierParamSpace,
    init: &ModelParams,
    opts: &FitOptions,
) -> Result<FitResult<ModelParams>> {
    fit_model(cache, space, init, opts)
}
