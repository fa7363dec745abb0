//! Censored Gaussian space-time copula baselines.
//!
//! Three correlation families over a latent standard Gaussian field: a
//! space-time separable model with anisotropic exponential spatial
//! correlation, and two frozen-field models (exponential and
//! compact-support spherical) whose correlation depends on the Lagrangian
//! coordinates `s - v t` only. Fitting reuses the censored pairwise
//! likelihood machinery, so information criteria are comparable across
//! families.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::SpaceTimePoint;
use crate::likelihood::{
    ExceedancePanel, FitOptions, FitResult, PairCache, PairDensityModel, ParamSpace, TemplateGeom,
};
use crate::normal::{bvn_upper, norm_cdf, norm_pdf, norm_quantile, norm_sf};
use crate::simulate::{PanelSimulator, SimulationDesign};
use crate::{Error, Result};

/// Upper cap keeping the pairwise density away from the comonotone
/// degeneracy; parameter points implying a larger correlation at some
/// retained pair are rejected.
const RHO_MAX: f64 = 1.0 - 1e-9;

/// Correlation family of the latent Gaussian field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CopulaFamily {
    /// Anisotropic exponential in space times exponential in time.
    Separable,
    /// Exponential correlation in frozen coordinates `s - v t`.
    FrozenExponential,
    /// Spherical (compact support) correlation in frozen coordinates.
    FrozenSpherical,
}

impl CopulaFamily {
    pub fn label(self) -> &'static str {
        match self {
            CopulaFamily::Separable => "c1_separable",
            CopulaFamily::FrozenExponential => "c2_frozen_exp",
            CopulaFamily::FrozenSpherical => "c3_frozen_sph",
        }
    }
}

/// Parameters of a censored Gaussian copula baseline.
///
/// `aniso_angle`/`aniso_ratio` build the anisotropy matrix of the scaled
/// Mahalanobis distance; `range_s` is the spatial range (the only range for
/// frozen fields), `range_t` the temporal range (separable only), and
/// `velocity` the frozen-field transport (frozen families only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussCopulaParams {
    pub family: CopulaFamily,
    pub aniso_angle: f64,
    pub aniso_ratio: f64,
    pub range_s: f64,
    pub range_t: Option<f64>,
    pub velocity: Option<Vector2<f64>>,
}

impl GaussCopulaParams {
    pub fn separable(aniso_angle: f64, aniso_ratio: f64, range_s: f64, range_t: f64) -> Result<Self> {
        let p = GaussCopulaParams {
            family: CopulaFamily::Separable,
            aniso_angle,
            aniso_ratio,
            range_s,
            range_t: Some(range_t),
            velocity: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn frozen(
        family: CopulaFamily,
        aniso_angle: f64,
        aniso_ratio: f64,
        range_s: f64,
        velocity: Vector2<f64>,
    ) -> Result<Self> {
        if family == CopulaFamily::Separable {
            return Err(Error::Parameter("frozen constructor used for separable family".into()));
        }
        let p = GaussCopulaParams {
            family,
            aniso_angle,
            aniso_ratio,
            range_s,
            range_t: None,
            velocity: Some(velocity),
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.aniso_ratio > 0.0 && self.aniso_ratio.is_finite()) {
            return Err(Error::Parameter(format!(
                "anisotropy ratio must be positive, got {}",
                self.aniso_ratio
            )));
        }
        if !(self.range_s > 0.0 && self.range_s.is_finite()) {
            return Err(Error::Parameter(format!(
                "spatial range must be positive, got {}",
                self.range_s
            )));
        }
        match self.family {
            CopulaFamily::Separable => {
                let rt = self.range_t.ok_or_else(|| {
                    Error::Parameter("separable family requires a temporal range".into())
                })?;
                if !(rt > 0.0 && rt.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "temporal range must be positive, got {rt}"
                    )));
                }
            }
            _ => {
                let v = self.velocity.ok_or_else(|| {
                    Error::Parameter("frozen families require a velocity".into())
                })?;
                if !(v.x.is_finite() && v.y.is_finite()) {
                    return Err(Error::Parameter("non-finite velocity".into()));
                }
            }
        }
        Ok(())
    }

    /// Anisotropy matrix: rotation-scale-rotation with unit first axis and
    /// `1/ratio` second axis; its determinant is `1/ratio`.
    pub fn anisotropy_matrix(&self) -> Matrix2<f64> {
        let (s, c) = self.aniso_angle.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        let d = Matrix2::new(1.0, 0.0, 0.0, 1.0 / self.aniso_ratio);
        r * d * r.transpose()
    }

    /// Scaled Mahalanobis distance between two spatial points.
    pub fn mahalanobis(&self, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
        let (s, c) = self.aniso_angle.sin_cos();
        let r_t = Matrix2::new(c, s, -s, c); // R(-angle)
        let w = r_t * (a - b);
        // Omega^{-1} = R diag(1, ratio) R^T
        (w.x * w.x + self.aniso_ratio * w.y * w.y).sqrt()
    }
}

fn rho_exponential(a: f64) -> f64 {
    (-a).exp()
}

fn rho_spherical(a: f64) -> f64 {
    if a >= 1.0 {
        0.0
    } else {
        1.0 - 1.5 * a + 0.5 * a * a * a
    }
}

/// Space-time correlation of the latent Gaussian field.
pub fn correlation(x1: &SpaceTimePoint, x2: &SpaceTimePoint, gp: &GaussCopulaParams) -> f64 {
    match gp.family {
        CopulaFamily::Separable => {
            let a = gp.mahalanobis(x1.s, x2.s) / gp.range_s;
            let h = (x1.t - x2.t).abs() / gp.range_t.expect("validated");
            rho_exponential(a) * rho_exponential(h)
        }
        CopulaFamily::FrozenExponential | CopulaFamily::FrozenSpherical => {
            let v = gp.velocity.expect("validated");
            let a = gp.mahalanobis(x1.s - v * x1.t, x2.s - v * x2.t) / gp.range_s;
            match gp.family {
                CopulaFamily::FrozenExponential => rho_exponential(a),
                _ => rho_spherical(a),
            }
        }
    }
}

/// Common censored generalized-Pareto margin mapped into the Gaussian
/// copula: censoring probability `p0` at the Gaussian threshold
/// `Phi^{-1}(p0)`, positive excesses GP(scale, shape).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaMargin {
    pub censor_prob: f64,
    pub gp_scale: f64,
    pub gp_shape: f64,
}

impl CopulaMargin {
    pub fn new(censor_prob: f64, gp_scale: f64, gp_shape: f64) -> Result<Self> {
        if !(censor_prob > 0.0 && censor_prob < 1.0) {
            return Err(Error::Parameter(format!(
                "censoring probability must be in (0,1), got {censor_prob}"
            )));
        }
        if !(gp_scale > 0.0 && gp_scale.is_finite() && gp_shape.is_finite()) {
            return Err(Error::Parameter("invalid generalized-Pareto margin".into()));
        }
        Ok(CopulaMargin {
            censor_prob,
            gp_scale,
            gp_shape,
        })
    }

    /// Margin implied by the transformed common scale: censoring
    /// probability `kappa/(kappa+1)`, GP(kappa + 1, 1).
    pub fn standard(kappa: f64) -> Result<Self> {
        Self::new(kappa / (kappa + 1.0), kappa + 1.0, 1.0)
    }

    /// Gaussian censoring threshold.
    pub fn gauss_threshold(&self) -> f64 {
        norm_quantile(self.censor_prob)
    }

    pub fn gp_cdf(&self, y: f64) -> f64 {
        debug_assert!(y >= 0.0);
        if self.gp_shape.abs() < 1e-12 {
            1.0 - (-y / self.gp_scale).exp()
        } else {
            let w = 1.0 + self.gp_shape * y / self.gp_scale;
            if w <= 0.0 {
                1.0
            } else {
                1.0 - w.powf(-1.0 / self.gp_shape)
            }
        }
    }

    pub fn gp_pdf(&self, y: f64) -> f64 {
        debug_assert!(y >= 0.0);
        if self.gp_shape.abs() < 1e-12 {
            (-y / self.gp_scale).exp() / self.gp_scale
        } else {
            let w = 1.0 + self.gp_shape * y / self.gp_scale;
            if w <= 0.0 {
                0.0
            } else {
                w.powf(-1.0 / self.gp_shape - 1.0) / self.gp_scale
            }
        }
    }

    pub fn gp_quantile(&self, u: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&u));
        if self.gp_shape.abs() < 1e-12 {
            -self.gp_scale * (1.0 - u).ln()
        } else {
            self.gp_scale / self.gp_shape * ((1.0 - u).powf(-self.gp_shape) - 1.0)
        }
    }

    /// Gaussian score of a positive excess:
    /// `z(y) = Phi^{-1}(p0 + (1-p0) GP(y))`.
    pub fn gauss_score(&self, y: f64) -> f64 {
        let u = self.censor_prob + (1.0 - self.censor_prob) * self.gp_cdf(y);
        norm_quantile(u.min(1.0 - 1e-16))
    }

    /// log of `dz/dy = (1-p0) gp_pdf(y) / phi(z)`.
    fn log_jacobian(&self, y: f64, z: f64) -> Result<f64> {
        let dens = (1.0 - self.censor_prob) * self.gp_pdf(y);
        let phi = norm_pdf(z);
        if !(dens > 0.0 && phi > 0.0) {
            return Err(Error::ParamRegion(format!(
                "degenerate copula jacobian at y = {y}"
            )));
        }
        Ok(dens.ln() - phi.ln())
    }
}

/// A censored Gaussian copula pair model: correlation family plus the
/// common margin map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPairModel {
    pub params: GaussCopulaParams,
    pub margin: CopulaMargin,
}

/// Per-template state: the pair correlation and censoring threshold.
#[derive(Debug, Clone, Copy)]
pub struct GaussState {
    rho: f64,
    z_thr: f64,
    sqrt1m: f64,
}

impl PairDensityModel for GaussPairModel {
    type State = GaussState;

    fn prepare(&self, geom: &TemplateGeom) -> Result<GaussState> {
        let x1 = SpaceTimePoint::new(Vector2::zeros(), 0.0).expect("origin");
        let x2 = SpaceTimePoint::new(geom.offset, geom.time_lag)
            .map_err(|e| Error::ParamRegion(e.to_string()))?;
        let rho = correlation(&x1, &x2, &self.params);
        if !(-RHO_MAX..=RHO_MAX).contains(&rho) {
            return Err(Error::ParamRegion(format!(
                "pair correlation {rho} too close to +-1"
            )));
        }
        Ok(GaussState {
            rho,
            z_thr: self.margin.gauss_threshold(),
            sqrt1m: (1.0 - rho * rho).sqrt(),
        })
    }

    fn log_mass00(&self, st: &GaussState) -> Result<f64> {
        // Pr(G1 <= z, G2 <= z) = 1 - 2 Pr(G > z) + Pr(both > z)
        let tail = norm_sf(st.z_thr);
        let mass = 1.0 - 2.0 * tail + bvn_upper(st.z_thr, st.z_thr, st.rho);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::ParamRegion(format!("censored mass {mass}")));
        }
        Ok(mass.ln())
    }

    fn log_single(&self, st: &GaussState, y: f64) -> Result<f64> {
        let z = self.margin.gauss_score(y);
        // d/dz Pr(G1 <= z, G2 <= z_thr) = phi(z) Phi((z_thr - rho z)/sqrt(1-rho^2))
        let cond = norm_cdf((st.z_thr - st.rho * z) / st.sqrt1m);
        if !(cond > 0.0) {
            return Err(Error::ParamRegion(format!(
                "vanishing partial-censoring probability at y = {y}"
            )));
        }
        Ok(norm_pdf(z).ln() + cond.ln() + self.margin.log_jacobian(y, z)?)
    }

    fn log_joint(&self, st: &GaussState, y_lo: f64, y_hi: f64) -> Result<f64> {
        let z1 = self.margin.gauss_score(y_lo);
        let z2 = self.margin.gauss_score(y_hi);
        // Bivariate normal log-density.
        let q = (z1 * z1 - 2.0 * st.rho * z1 * z2 + z2 * z2) / (st.sqrt1m * st.sqrt1m);
        let log_bvn = -q / 2.0
            - (2.0 * std::f64::consts::PI).ln()
            - st.sqrt1m.ln();
        Ok(log_bvn
            + self.margin.log_jacobian(y_lo, z1)?
            + self.margin.log_jacobian(y_hi, z2)?)
    }
}

/// The four-case censored copula pair density (probability mass at (0,0),
/// densities otherwise).
pub fn gauss_pair_density(
    y1: f64,
    y2: f64,
    x1: &SpaceTimePoint,
    x2: &SpaceTimePoint,
    model: &GaussPairModel,
) -> Result<f64> {
    if y1 < 0.0 || y2 < 0.0 || !y1.is_finite() || !y2.is_finite() {
        return Err(Error::Domain(format!(
            "censored excesses must be finite and >= 0, got ({y1}, {y2})"
        )));
    }
    let geom = TemplateGeom {
        site_i: 0,
        site_j: 1,
        lag_steps: 0,
        offset: x2.s - x1.s,
        time_lag: x2.t - x1.t,
    };
    let st = model.prepare(&geom)?;
    let log_f = match (y1 > 0.0, y2 > 0.0) {
        (false, false) => model.log_mass00(&st)?,
        (true, false) => model.log_single(&st, y1)?,
        (false, true) => model.log_single(&st, y2)?,
        (true, true) => {
            let (lo, hi) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
            model.log_joint(&st, lo, hi)?
        }
    };
    Ok(log_f.exp())
}

/// Free parameters of a copula family, in optimizer order.
fn family_param_names(family: CopulaFamily) -> Vec<&'static str> {
    match family {
        CopulaFamily::Separable => vec!["aniso_angle", "aniso_ratio", "range_s", "range_t"],
        _ => vec!["aniso_angle", "aniso_ratio", "range_s", "velocity_x", "velocity_y"],
    }
}

/// Parameter space of a copula baseline; the margin stays fixed (it is
/// estimated upstream, shared with the hierarchical fits).
#[derive(Debug, Clone)]
pub struct CopulaParamSpace {
    pub family: CopulaFamily,
    pub margin: CopulaMargin,
    /// Bounds for (ranges, ratio) on the natural scale.
    pub range_bounds: (f64, f64),
    pub ratio_bounds: (f64, f64),
    pub velocity_bound: f64,
}

impl CopulaParamSpace {
    pub fn new(family: CopulaFamily, margin: CopulaMargin) -> Self {
        CopulaParamSpace {
            family,
            margin,
            range_bounds: (1e-6, 1e6),
            ratio_bounds: (1e-3, 1e3),
            velocity_bound: 1e4,
        }
    }
}

impl ParamSpace for CopulaParamSpace {
    type Model = GaussPairModel;

    fn names(&self) -> Vec<&'static str> {
        family_param_names(self.family)
    }

    fn natural(&self, m: &GaussPairModel) -> Vec<f64> {
        let p = &m.params;
        match self.family {
            CopulaFamily::Separable => vec![
                p.aniso_angle,
                p.aniso_ratio,
                p.range_s,
                p.range_t.expect("validated"),
            ],
            _ => {
                let v = p.velocity.expect("validated");
                vec![p.aniso_angle, p.aniso_ratio, p.range_s, v.x, v.y]
            }
        }
    }

    fn pack(&self, m: &GaussPairModel) -> Vec<f64> {
        let nat = self.natural(m);
        match self.family {
            CopulaFamily::Separable => vec![nat[0], nat[1].ln(), nat[2].ln(), nat[3].ln()],
            _ => vec![nat[0], nat[1].ln(), nat[2].ln(), nat[3], nat[4]],
        }
    }

    fn unpack(&self, eta: &[f64]) -> Result<GaussPairModel> {
        let angle = eta[0].rem_euclid(std::f64::consts::PI);
        let ratio = eta[1].exp();
        let range_s = eta[2].exp();
        let check = |v: f64, (lo, hi): (f64, f64), what: &str| -> Result<f64> {
            if !(v.is_finite() && v >= lo && v <= hi) {
                return Err(Error::ParamRegion(format!("{what} = {v} outside [{lo}, {hi}]")));
            }
            Ok(v)
        };
        check(ratio, self.ratio_bounds, "aniso_ratio")?;
        check(range_s, self.range_bounds, "range_s")?;
        let params = match self.family {
            CopulaFamily::Separable => {
                let range_t = check(eta[3].exp(), self.range_bounds, "range_t")?;
                GaussCopulaParams::separable(angle, ratio, range_s, range_t)?
            }
            fam => {
                let vx = check(eta[3], (-self.velocity_bound, self.velocity_bound), "velocity_x")?;
                let vy = check(eta[4], (-self.velocity_bound, self.velocity_bound), "velocity_y")?;
                GaussCopulaParams::frozen(fam, angle, ratio, range_s, Vector2::new(vx, vy))?
            }
        };
        Ok(GaussPairModel {
            params,
            margin: self.margin,
        })
    }

    fn scale_to_natural(&self, m: &GaussPairModel) -> Vec<f64> {
        let nat = self.natural(m);
        match self.family {
            CopulaFamily::Separable => vec![1.0, nat[1], nat[2], nat[3]],
            _ => vec![1.0, nat[1], nat[2], 1.0, 1.0],
        }
    }

    fn default_steps(&self) -> Vec<f64> {
        match self.family {
            CopulaFamily::Separable => vec![0.25, 0.2, 0.2, 0.2],
            _ => vec![0.25, 0.2, 0.2, 0.05, 0.05],
        }
    }
}

/// Fits a copula baseline by censored pairwise likelihood, sharing the fit
/// options and result schema with the hierarchical family.
pub fn fit_baseline(
    cache: &PairCache,
    space: &CopulaParamSpace,
    init: &GaussPairModel,
    opts: &FitOptions,
) -> Result<FitResult<GaussPairModel>> {
    crate::likelihood::fit_model(cache, space, init, opts)
}

/// Simulates an exceedance panel from a fitted copula. Exact for the
/// separable family (spatial Cholesky plus an AR(1) recursion in time on a
/// uniform grid); the frozen families have no tractable exact sampler on a
/// factorial design and return `Unsupported`.
impl PanelSimulator for GaussPairModel {
    fn simulate(&self, design: &SimulationDesign) -> Result<ExceedancePanel> {
        match self.params.family {
            CopulaFamily::Separable => simulate_separable(self, design),
            fam => Err(Error::Unsupported(format!(
                "exact panel simulation is not available for {}",
                fam.label()
            ))),
        }
    }

    fn label(&self) -> String {
        self.params.family.label().into()
    }
}

fn simulate_separable(model: &GaussPairModel, design: &SimulationDesign) -> Result<ExceedancePanel> {
    let gp = &model.params;
    let s_len = design.sites.len();
    let t_len = design.times.len();
    // Uniform grid required for the AR(1) recursion.
    let step = if t_len > 1 {
        let h = design.times[1] - design.times[0];
        for w in design.times.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs() {
                return Err(Error::Data(
                    "separable simulation requires a uniform time grid".into(),
                ));
            }
        }
        h
    } else {
        1.0
    };

    // Spatial correlation factor.
    let mut cov = DMatrix::<f64>::zeros(s_len, s_len);
    for i in 0..s_len {
        for j in 0..s_len {
            let a = gp.mahalanobis(design.sites[i], design.sites[j]) / gp.range_s;
            cov[(i, j)] = rho_exponential(a);
        }
    }
    // Tiny jitter guards the Cholesky against coincident sites.
    for i in 0..s_len {
        cov[(i, i)] += 1e-12;
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Singular("spatial correlation matrix not positive definite".into()))?;
    let l = chol.l();

    let ar = rho_exponential(step / gp.range_t.expect("validated"));
    let innov_scale = (1.0 - ar * ar).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    rng.set_stream(1);
    let mut gauss = vec![0.0f64; s_len * t_len];
    let mut spatial = nalgebra::DVector::<f64>::zeros(s_len);
    let mut state = nalgebra::DVector::<f64>::zeros(s_len);
    for t in 0..t_len {
        for v in spatial.iter_mut() {
            // Box-Muller from two uniforms keeps the stream layout simple.
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            *v = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
        let innov = &l * &spatial;
        if t == 0 {
            state = innov;
        } else {
            state = ar * &state + innov_scale * innov;
        }
        for i in 0..s_len {
            gauss[i * t_len + t] = state[i];
        }
    }

    // Map to the censored common margin.
    let z_thr = model.margin.gauss_threshold();
    let values: Vec<f64> = gauss
        .iter()
        .map(|&g| {
            if g <= z_thr {
                0.0
            } else {
                let u = (norm_cdf(g) - model.margin.censor_prob)
                    / (1.0 - model.margin.censor_prob);
                model.margin.gp_quantile(u.clamp(0.0, 1.0 - 1e-16))
            }
        })
        .collect();
    ExceedancePanel::new(
        design.sites.clone(),
        design.times.clone(),
        values,
        vec![false; s_len * t_len],
    )
}
