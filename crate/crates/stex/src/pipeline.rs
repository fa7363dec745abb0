//! End-to-end run orchestration: ingestion, margins, transform, dependence
//! fits, information-criterion comparison, tail diagnostics and the
//! parametric-bootstrap RMSE table, all persisted under one run directory
//! with a manifest that makes every number reproducible from the inputs.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::baselines::{
    CopulaFamily, CopulaMargin, CopulaParamSpace, GaussCopulaParams, GaussPairModel,
};
use crate::diagnostics::{
    distance_bins, empirical_chi, local_linear_smooth, rmse_comparison,
    stationary_bootstrap, BootstrapScheme, PairAtLag,
};
use crate::geometry::{CylinderKernel, SpaceTimePoint};
use crate::io::{export_series, ingest, IngestConfig, Projection};
use crate::likelihood::{
    clic, fit_model, godambe, independence_loglik, ExceedancePanel, FitOptions, GodambeOptions,
    HierParamSpace, PairCache, PairScheme, ParamId,
};
use crate::margins::{fit_margin, to_common_margins, MarginalFit, QuantileConvention, StationSeries};
use crate::model::{chi_sub, lp1, lp2, ModelParams};
use crate::normal::{bvn_upper, norm_quantile};
use crate::simulate::{PanelSimulator, SimulationDesign};
use crate::{Error, Result};

/// Model families the pipeline can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Hierarchical with free velocity.
    G1,
    /// Hierarchical with velocity fixed at zero.
    G2,
    /// Separable Gaussian copula.
    C1,
    /// Frozen-field exponential Gaussian copula.
    C2,
    /// Frozen-field spherical Gaussian copula.
    C3,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::G1 => "g1",
            Family::G2 => "g2",
            Family::C1 => "c1",
            Family::C2 => "c2",
            Family::C3 => "c3",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "g1" => Ok(Family::G1),
            "g2" => Ok(Family::G2),
            "c1" => Ok(Family::C1),
            "c2" => Ok(Family::C2),
            "c3" => Ok(Family::C3),
            other => Err(Error::Parameter(format!(
                "unknown family '{other}' (expected g1, g2, c1, c2 or c3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    /// Mean geometric block length in hours.
    pub mean_block: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        // 20 days of hourly data.
        BootstrapConfig {
            n_boot: 200,
            mean_block: 480.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmseConfig {
    pub n_sim: usize,
    pub lags: Vec<usize>,
    pub quantile: f64,
    pub neighbor_count: usize,
}

impl Default for RmseConfig {
    fn default() -> Self {
        RmseConfig {
            n_sim: 50,
            lags: vec![0, 1, 2],
            quantile: 0.995,
            neighbor_count: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_eval: usize,
    pub n_starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_eval: 4000,
            n_starts: 1,
        }
    }
}

/// Full experiment configuration, echoed verbatim into the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub coords_file: PathBuf,
    pub obs_file: PathBuf,
    pub out_dir: PathBuf,
    pub threshold_order: f64,
    pub quantile_convention: QuantileConvention,
    pub projection: Projection,
    pub months: Option<Vec<u32>>,
    pub missing_max_fraction: f64,
    pub min_exceedances: usize,
    pub delta_s: f64,
    pub delta_t: usize,
    pub families: Vec<Family>,
    pub optimizer: OptimizerConfig,
    /// 0 means automatic (scaled to the series length).
    pub godambe_blocks: usize,
    pub godambe_block_len: usize,
    pub bootstrap: BootstrapConfig,
    pub chi_quantiles: Vec<f64>,
    pub chi_max_lag: usize,
    pub spatial_bins: usize,
    pub rmse: RmseConfig,
    /// Hours of simulated snapshot written for external plotting.
    pub snapshot_hours: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(coords: PathBuf, obs: PathBuf, out_dir: PathBuf) -> Self {
        RunConfig {
            coords_file: coords,
            obs_file: obs,
            out_dir,
            threshold_order: 0.99,
            quantile_convention: QuantileConvention::AllHours,
            projection: Projection::None,
            months: None,
            missing_max_fraction: 0.7,
            min_exceedances: 30,
            delta_s: 110.0,
            delta_t: 10,
            families: vec![Family::G1, Family::G2, Family::C1, Family::C2, Family::C3],
            optimizer: OptimizerConfig::default(),
            godambe_blocks: 0,
            godambe_block_len: 0,
            bootstrap: BootstrapConfig::default(),
            chi_quantiles: vec![0.99, 0.995],
            chi_max_lag: 10,
            spatial_bins: 10,
            rmse: RmseConfig::default(),
            snapshot_hours: 48,
            seed: 1,
        }
    }
}

/// One fitted family with everything the comparison tables need.
pub struct FamilyFit {
    pub family: Family,
    pub pl: f64,
    pub n_pair_obs: u64,
    pub converged: bool,
    pub n_eval: usize,
    pub names: Vec<&'static str>,
    pub estimates: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub clic: Option<crate::likelihood::ClicInfo>,
    pub godambe_blocks: Option<(usize, usize)>,
    /// Simulator for the RMSE comparison when the family supports it.
    pub simulator: Option<Box<dyn PanelSimulator + Send>>,
    /// Model-implied conditional exceedance probability at a quantile and
    /// space-time lag (for the goodness-of-fit curves).
    pub cond_prob: Box<dyn Fn(f64, Vector2<f64>, f64) -> f64 + Send + Sync>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(content.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Runs the full pipeline, returning the run directory. Every stage
/// persists its outputs before the next starts; a failure aborts with the
/// stage name while earlier outputs remain on disk.
pub fn run(config: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&config.out_dir)?;
    let out = config.out_dir.clone();
    let mut manifest = Manifest::new(config)?;
    manifest.write(&out)?;

    // --- ingest ---
    let ingest_cfg = IngestConfig {
        projection: config.projection,
        months: config.months.clone(),
        missing_max_fraction: config.missing_max_fraction,
    };
    let (series, report) = stage(
        "ingest",
        ingest(&config.coords_file, &config.obs_file, &ingest_cfg),
    )?;
    stage("ingest", write_ingest_report(&out, &report))?;
    manifest.note("ingest", format!("{} stations kept of {}", report.stations_kept, report.stations_total));
    manifest.write(&out)?;

    // --- margins ---
    let (series, margin_fits) = stage("margins", fit_all_margins(&out, series, config))?;
    manifest.note("margins", format!("{} stations fitted", margin_fits.len()));
    manifest.write(&out)?;

    // --- transform ---
    let (panel, kappa) = stage(
        "transform",
        to_common_margins(&series, &margin_fits, config.threshold_order),
    )?;
    stage("transform", {
        let transformed: Vec<StationSeries> = series
            .iter()
            .enumerate()
            .map(|(i, s)| StationSeries {
                id: s.id.clone(),
                coords: s.coords,
                elevation: s.elevation,
                values: (0..panel.n_times())
                    .map(|t| (!panel.is_missing(i, t)).then(|| panel.value(i, t)))
                    .collect(),
            })
            .collect();
        export_series(
            &transformed,
            &out.join("transformed_coords.csv"),
            &out.join("transformed_obs.csv"),
        )
    })?;
    manifest.kappa = Some(kappa);
    manifest.note("transform", format!("kappa = {kappa}"));
    manifest.write(&out)?;

    // --- fits ---
    let scheme = PairScheme::new(config.delta_s, config.delta_t)?;
    let cache = stage("fit", PairCache::build(&panel, &scheme))?;
    let base = stage("fit", standard_params(&panel, kappa))?;
    let indep_ll = stage("fit", independence_loglik(&panel, &base))?;
    let mut fits: Vec<FamilyFit> = Vec::new();
    for &family in &config.families {
        let f = stage(
            family.label(),
            fit_family(family, &panel, &cache, kappa, config, indep_ll),
        )?;
        stage(family.label(), write_fit_kv(&out, &f, kappa, indep_ll))?;
        manifest.note(family.label(), format!("pl = {}", f.pl));
        manifest.write(&out)?;
        fits.push(f);
    }
    stage("compare", write_clic_table(&out, &fits))?;
    manifest.write(&out)?;

    // --- diagnostics ---
    stage("diagnose", write_chi_curves(&out, &panel, config))?;
    stage("diagnose", write_cond_prob_curves(&out, &panel, &fits, config))?;
    manifest.note(
        "diagnose",
        format!(
            "spatial bins = {}, bootstrap = {} x mean block {}",
            config.spatial_bins, config.bootstrap.n_boot, config.bootstrap.mean_block
        ),
    );
    manifest.write(&out)?;

    // --- rmse ---
    stage("rmse", write_rmse_table(&out, &panel, &fits, config))?;
    manifest.write(&out)?;

    // --- snapshot ---
    stage("snapshot", write_snapshot(&out, &panel, &fits, config))?;
    manifest.note("snapshot", format!("{} hours", config.snapshot_hours));
    manifest.finished = true;
    manifest.write(&out)?;
    Ok(out)
}

#[derive(Serialize)]
struct Manifest {
    crate_name: &'static str,
    crate_version: &'static str,
    seed: u64,
    config: RunConfig,
    kappa: Option<f64>,
    stages: Vec<(String, String)>,
    finished: bool,
}

impl Manifest {
    fn new(config: &RunConfig) -> Result<Self> {
        Ok(Manifest {
            crate_name: env!("CARGO_PKG_NAME"),
            crate_version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config: config.clone(),
            kappa: None,
            stages: Vec::new(),
            finished: false,
        })
    }

    fn note(&mut self, stage: &str, what: String) {
        self.stages.push((stage.to_string(), what));
    }

    fn write(&self, out: &Path) -> Result<()> {
        write_file(&out.join("manifest.json"), &serde_json::to_string_pretty(self)?)
    }
}

fn write_ingest_report(out: &Path, report: &crate::io::IngestReport) -> Result<()> {
    let mut s = String::from("station_id,missing_fraction,kept\n");
    for (id, frac) in &report.missing_fractions {
        let kept = !report.excluded.contains(id);
        s.push_str(&format!("{id},{frac},{kept}\n"));
    }
    write_file(&out.join("ingest_report.csv"), &s)
}

fn fit_all_margins(
    out: &Path,
    series: Vec<StationSeries>,
    config: &RunConfig,
) -> Result<(Vec<StationSeries>, Vec<MarginalFit>)> {
    use rayon::prelude::*;
    let results: Vec<Result<MarginalFit>> = series
        .par_iter()
        .map(|s| {
            fit_margin(
                s,
                config.threshold_order,
                config.quantile_convention,
                config.min_exceedances,
            )
        })
        .collect();
    let mut kept_series = Vec::new();
    let mut fits = Vec::new();
    let mut table = String::from(
        "station_id,threshold,gp_scale,gp_shape,n_exceed,se_scale,se_shape,loglik,status\n",
    );
    for (s, r) in series.into_iter().zip(results) {
        match r {
            Ok(fit) => {
                let (ses, sex) = fit
                    .std_errors
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .unwrap_or_default();
                table.push_str(&format!(
                    "{},{},{},{},{},{},{},{},ok\n",
                    fit.station,
                    fit.threshold,
                    fit.gp_scale,
                    fit.gp_shape,
                    fit.n_exceed,
                    ses,
                    sex,
                    fit.loglik
                ));
                kept_series.push(s);
                fits.push(fit);
            }
            Err(e) => {
                table.push_str(&format!("{},,,,,,,,\"excluded: {e}\"\n", s.id));
            }
        }
    }
    write_file(&out.join("margins.csv"), &table)?;
    if fits.is_empty() {
        return Err(Error::Data("no station margin could be fitted".into()));
    }
    Ok((kept_series, fits))
}

/// Reads a margins table written by the margins stage; rows whose status is
/// not "ok" are skipped.
pub fn read_margins_csv(path: &Path) -> Result<Vec<MarginalFit>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut fits = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.get(8) != Some("ok") {
            continue;
        }
        let get_f = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Data(format!("bad margins row for {:?}", rec.get(0))))
        };
        let se = match (
            rec.get(5).and_then(|s| s.parse::<f64>().ok()),
            rec.get(6).and_then(|s| s.parse::<f64>().ok()),
        ) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        fits.push(MarginalFit {
            station: rec.get(0).unwrap_or_default().to_string(),
            threshold: get_f(1)?,
            gp_scale: get_f(2)?,
            gp_shape: get_f(3)?,
            n_exceed: get_f(4)? as usize,
            loglik: get_f(7)?,
            std_errors: se,
        });
    }
    if fits.is_empty() {
        return Err(Error::Data("margins file has no usable rows".into()));
    }
    Ok(fits)
}

/// Margins stage as a standalone operation (used by the CLI): fits every
/// station and writes the table into `out`.
pub fn run_margins_stage(
    out: &Path,
    series: Vec<StationSeries>,
    config: &RunConfig,
) -> Result<(Vec<StationSeries>, Vec<MarginalFit>)> {
    fit_all_margins(out, series, config)
}

/// One-family fit as a standalone operation (used by the CLI).
pub fn run_fit_stage(
    out: &Path,
    panel: &ExceedancePanel,
    family: Family,
    kappa: f64,
    config: &RunConfig,
) -> Result<()> {
    let scheme = PairScheme::new(config.delta_s, config.delta_t)?;
    let cache = PairCache::build(panel, &scheme)?;
    let base = standard_params(panel, kappa)?;
    let indep_ll = independence_loglik(panel, &base)?;
    let fit = fit_family(family, panel, &cache, kappa, config, indep_ll)?;
    write_fit_kv(out, &fit, kappa, indep_ll)
}

/// Diagnostics stage as a standalone operation (used by the CLI).
pub fn run_diagnose_stage(out: &Path, panel: &ExceedancePanel, config: &RunConfig) -> Result<()> {
    write_chi_curves(out, panel, config)
}

/// Builds an exceedance panel from transformed station series.
pub fn panel_from_series(series: &[StationSeries]) -> Result<ExceedancePanel> {
    if series.is_empty() {
        return Err(Error::Data("no stations".into()));
    }
    let t_len = series[0].values.len();
    let sites: Vec<Vector2<f64>> = series.iter().map(|s| s.coords).collect();
    let mut values = vec![0.0; series.len() * t_len];
    let mut missing = vec![false; series.len() * t_len];
    for (i, s) in series.iter().enumerate() {
        if s.values.len() != t_len {
            return Err(Error::Data("stations have unequal series lengths".into()));
        }
        for (t, v) in s.values.iter().enumerate() {
            match v {
                Some(x) => values[i * t_len + t] = *x,
                None => missing[i * t_len + t] = true,
            }
        }
    }
    ExceedancePanel::new(
        sites,
        (0..t_len).map(|t| t as f64).collect(),
        values,
        missing,
    )
}

/// Standard-scale hierarchical parameters with a data-driven kernel init.
fn standard_params(panel: &ExceedancePanel, kappa: f64) -> Result<ModelParams> {
    let sites = panel.sites();
    let mut diameter: f64 = 0.0;
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            diameter = diameter.max((sites[j] - sites[i]).norm());
        }
    }
    let semi = (diameter / 4.0).max(1e-3);
    let kernel = CylinderKernel::new(semi, semi, 0.1, 10.0, Vector2::zeros())?;
    ModelParams::standard(kernel, kappa)
}

fn godambe_options(panel: &ExceedancePanel, config: &RunConfig) -> GodambeOptions {
    let mut opts = GodambeOptions::for_length(panel.n_times());
    if config.godambe_blocks > 0 {
        opts.n_blocks = config.godambe_blocks;
    }
    if config.godambe_block_len > 0 {
        opts.block_len = config.godambe_block_len;
    }
    opts
}

fn fit_family(
    family: Family,
    panel: &ExceedancePanel,
    cache: &PairCache,
    kappa: f64,
    config: &RunConfig,
    indep_ll: f64,
) -> Result<FamilyFit> {
    let fit_opts = FitOptions {
        max_eval: config.optimizer.max_eval,
        n_starts: config.optimizer.n_starts,
        seed: config.seed,
        ..Default::default()
    };
    let g_opts = godambe_options(panel, config);

    match family {
        Family::G1 | Family::G2 => {
            let init = standard_params(panel, kappa)?;
            let free = if family == Family::G1 {
                vec![
                    ParamId::SemiX,
                    ParamId::SemiY,
                    ParamId::Rotation,
                    ParamId::Duration,
                    ParamId::VelocityX,
                    ParamId::VelocityY,
                ]
            } else {
                vec![
                    ParamId::SemiX,
                    ParamId::SemiY,
                    ParamId::Rotation,
                    ParamId::Duration,
                ]
            };
            let space = HierParamSpace::new(init, free);
            let mut fit = fit_model(cache, &space, &init, &fit_opts)?;
            fit.godambe = Some(godambe(panel, cache, &space, &fit, &g_opts)?);
            let clic_info = clic(&fit, indep_ll)?;
            fit.clic = Some(clic_info);
            let model = fit.model;
            Ok(FamilyFit {
                family,
                pl: fit.pl,
                n_pair_obs: fit.n_pair_obs,
                converged: fit.converged,
                n_eval: fit.n_eval,
                names: fit.free_names.clone(),
                estimates: fit.estimates.clone(),
                std_errors: fit.godambe.as_ref().map(|g| g.std_errors.clone()),
                clic: fit.clic,
                godambe_blocks: fit.godambe.as_ref().map(|g| (g.n_blocks, g.block_len)),
                simulator: Some(Box::new(model)),
                cond_prob: Box::new(move |q, ds, dt| {
                    hier_cond_prob(&model, q, ds, dt).unwrap_or(f64::NAN)
                }),
            })
        }
        Family::C1 | Family::C2 | Family::C3 => {
            let margin = CopulaMargin::standard(kappa)?;
            let cop_family = match family {
                Family::C1 => CopulaFamily::Separable,
                Family::C2 => CopulaFamily::FrozenExponential,
                _ => CopulaFamily::FrozenSpherical,
            };
            let space = CopulaParamSpace::new(cop_family, margin);
            let sites = panel.sites();
            let mut diameter: f64 = 0.0;
            for i in 0..sites.len() {
                for j in (i + 1)..sites.len() {
                    diameter = diameter.max((sites[j] - sites[i]).norm());
                }
            }
            let range0 = (diameter / 3.0).max(1e-3);
            let params = match cop_family {
                CopulaFamily::Separable => {
                    GaussCopulaParams::separable(0.1, 1.0, range0, 5.0)?
                }
                fam => GaussCopulaParams::frozen(fam, 0.1, 1.0, range0, Vector2::new(0.5, 0.5))?,
            };
            let init = GaussPairModel { params, margin };
            let mut fit = fit_model(cache, &space, &init, &fit_opts)?;
            fit.godambe = Some(godambe(panel, cache, &space, &fit, &g_opts)?);
            let clic_info = clic(&fit, indep_ll)?;
            fit.clic = Some(clic_info);
            let model = fit.model;
            let supports_sim = cop_family == CopulaFamily::Separable;
            Ok(FamilyFit {
                family,
                pl: fit.pl,
                n_pair_obs: fit.n_pair_obs,
                converged: fit.converged,
                n_eval: fit.n_eval,
                names: fit.free_names.clone(),
                estimates: fit.estimates.clone(),
                std_errors: fit.godambe.as_ref().map(|g| g.std_errors.clone()),
                clic: fit.clic,
                godambe_blocks: fit.godambe.as_ref().map(|g| (g.n_blocks, g.block_len)),
                simulator: supports_sim.then(|| Box::new(model) as Box<dyn PanelSimulator + Send>),
                cond_prob: Box::new(move |q, ds, dt| gauss_cond_prob(&model, q, ds, dt)),
            })
        }
    }
}

/// Model-implied Pr(Y1 > y_q, Y2 > y_q)/Pr(Y > y_q) on the transformed
/// scale, at the model's own q-quantile.
fn hier_cond_prob(p: &ModelParams, q: f64, ds: Vector2<f64>, dt: f64) -> Result<f64> {
    // marginal quantile: 1 - lp1(y + kappa) = q with identity margins
    let y_q = (p.beta * ((1.0 - q).powf(-1.0 / p.alpha) - 1.0) - p.kappa).max(0.0);
    let x1 = SpaceTimePoint::new(Vector2::zeros(), 0.0).expect("origin");
    let x2 = SpaceTimePoint::new(ds, dt).map_err(|e| Error::Data(e.to_string()))?;
    if y_q == 0.0 {
        // conditioning level at or below the censoring point
        let joint = lp2(p.kappa, p.kappa, &x1, &x2, p)?;
        return Ok(joint / lp1(p.kappa, p)?);
    }
    chi_sub(y_q, &x1, &x2, p)
}

fn gauss_cond_prob(m: &GaussPairModel, q: f64, ds: Vector2<f64>, dt: f64) -> f64 {
    let x1 = SpaceTimePoint::new(Vector2::zeros(), 0.0).expect("origin");
    let x2 = SpaceTimePoint::new(ds, dt).expect("finite lag");
    let rho = crate::baselines::correlation(&x1, &x2, &m.params);
    let z = norm_quantile(q);
    let rho = rho.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    bvn_upper(z, z, rho) / (1.0 - q)
}

fn write_fit_kv(out: &Path, f: &FamilyFit, kappa: f64, indep_ll: f64) -> Result<()> {
    let mut s = String::new();
    s.push_str(&format!("family = {}\n", f.family.label()));
    s.push_str(&format!("kappa = {kappa}\n"));
    s.push_str(&format!("pl = {}\n", f.pl));
    s.push_str(&format!("independence_loglik = {indep_ll}\n"));
    s.push_str(&format!("n_pair_obs = {}\n", f.n_pair_obs));
    s.push_str(&format!("converged = {}\n", f.converged));
    s.push_str(&format!("n_eval = {}\n", f.n_eval));
    for (name, v) in f.names.iter().zip(&f.estimates) {
        s.push_str(&format!("param.{name} = {v}\n"));
    }
    if let Some(se) = &f.std_errors {
        for (name, v) in f.names.iter().zip(se) {
            s.push_str(&format!("se.{name} = {v}\n"));
        }
    }
    if let Some((b, d)) = f.godambe_blocks {
        s.push_str(&format!("godambe.n_blocks = {b}\ngodambe.block_len = {d}\n"));
    }
    if let Some(c) = &f.clic {
        s.push_str(&format!(
            "clic = {}\nclic_star = {}\nclic.penalty = {}\nclic.rescale_c = {}\n",
            c.clic, c.clic_star, c.penalty, c.rescale_c
        ));
    }
    write_file(&out.join(format!("fit_{}.kv", f.family.label())), &s)
}

fn write_clic_table(out: &Path, fits: &[FamilyFit]) -> Result<()> {
    let mut s = String::from("family,pl,n_pair_obs,penalty,clic,clic_star,converged\n");
    for f in fits {
        let (pen, cl, cls) = f
            .clic
            .map(|c| (c.penalty.to_string(), c.clic.to_string(), c.clic_star.to_string()))
            .unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f.family.label(),
            f.pl,
            f.n_pair_obs,
            pen,
            cl,
            cls,
            f.converged
        ));
    }
    write_file(&out.join("clic_comparison.csv"), &s)
}

fn write_chi_curves(out: &Path, panel: &ExceedancePanel, config: &RunConfig) -> Result<()> {
    let scheme = BootstrapScheme::new(config.bootstrap.n_boot, config.bootstrap.mean_block)?;
    let mut rows = String::from(
        "kind,lag,distance,q,chi,chi_lo,chi_hi,chibar,chibar_lo,chibar_hi,chi_smooth,n_pairs\n",
    );

    // Temporal curves: same-site pairs at lags 1..=max.
    let temporal_pairs: Vec<(usize, Vec<PairAtLag>)> = (1..=config.chi_max_lag)
        .map(|h| {
            (
                h,
                (0..panel.n_sites())
                    .map(|i| PairAtLag {
                        site_i: i,
                        site_j: i,
                        lag: h,
                    })
                    .collect(),
            )
        })
        .collect();
    // Spatial curves: equal-count distance bins at lag 0.
    let bins = distance_bins(panel.sites(), config.spatial_bins, f64::INFINITY);

    for &q in &config.chi_quantiles {
        // Point estimates.
        let mut temp_est = Vec::new();
        for (h, pairs) in &temporal_pairs {
            temp_est.push((*h, empirical_chi(panel, pairs, q)?));
        }
        let mut spat_est = Vec::new();
        for (d, pairs) in &bins {
            spat_est.push((*d, empirical_chi(panel, pairs, q)?));
        }

        // One bootstrap pass over the stacked statistic vector.
        let stat = |p: &ExceedancePanel| -> Result<Vec<f64>> {
            let mut v = Vec::new();
            for (_, pairs) in &temporal_pairs {
                let e = empirical_chi(p, pairs, q)?;
                v.push(e.chi);
                v.push(e.chibar);
            }
            for (_, pairs) in &bins {
                let e = empirical_chi(p, pairs, q)?;
                v.push(e.chi);
                v.push(e.chibar);
            }
            Ok(v)
        };
        let band = stationary_bootstrap(panel, &scheme, config.seed, stat)?;

        // Smoothed spatial chi at the bin centers.
        let xs: Vec<f64> = spat_est.iter().map(|(d, _)| *d).collect();
        let ys: Vec<f64> = spat_est.iter().map(|(_, e)| e.chi).collect();
        let span = xs.last().copied().unwrap_or(1.0) - xs.first().copied().unwrap_or(0.0);
        let smooth = local_linear_smooth(&xs, &ys, (span / 4.0).max(1e-9), &xs);

        let mut k = 0;
        for (h, e) in &temp_est {
            rows.push_str(&format!(
                "temporal,{h},,{q},{},{},{},{},{},{},,{}\n",
                e.chi,
                band.lo[k],
                band.hi[k],
                e.chibar,
                band.lo[k + 1],
                band.hi[k + 1],
                e.n_pairs
            ));
            k += 2;
        }
        for (bin_idx, (d, e)) in spat_est.iter().enumerate() {
            rows.push_str(&format!(
                "spatial,0,{d},{q},{},{},{},{},{},{},{},{}\n",
                e.chi,
                band.lo[k],
                band.hi[k],
                e.chibar,
                band.lo[k + 1],
                band.hi[k + 1],
                smooth[bin_idx],
                e.n_pairs
            ));
            k += 2;
        }
    }
    write_file(&out.join("chi_curves.csv"), &rows)
}

/// Pair bearings folded to [0, pi) and split into four sectors.
fn direction_sector(d: Vector2<f64>) -> usize {
    let mut angle = d.y.atan2(d.x);
    if angle < 0.0 {
        angle += std::f64::consts::PI;
    }
    ((angle / (std::f64::consts::PI / 4.0)).floor() as usize).min(3)
}

fn write_cond_prob_curves(
    out: &Path,
    panel: &ExceedancePanel,
    fits: &[FamilyFit],
    config: &RunConfig,
) -> Result<()> {
    let q = config.threshold_order.max(
        config
            .chi_quantiles
            .first()
            .copied()
            .unwrap_or(config.threshold_order),
    );
    let sites = panel.sites();
    let n_dist_bins = 5usize;
    let mut rows = String::from("direction,lag,distance,source,prob,n_pairs\n");

    // Collect pairs by (sector, distance bin).
    let mut all: Vec<(usize, f64, usize, usize)> = Vec::new(); // (sector, dist, i, j)
    let mut max_d: f64 = 0.0;
    for i in 0..sites.len() {
        for j in 0..sites.len() {
            if i == j {
                continue;
            }
            let d = sites[j] - sites[i];
            let dist = d.norm();
            if dist > config.delta_s {
                continue;
            }
            max_d = max_d.max(dist);
            all.push((direction_sector(d), dist, i, j));
        }
    }
    if all.is_empty() {
        return write_file(&out.join("cond_prob_curves.csv"), &rows);
    }
    let step = panel.time_step().unwrap_or(1.0);

    for h in [0usize, 1, 2] {
        for sector in 0..4 {
            for b in 0..n_dist_bins {
                let lo = max_d * b as f64 / n_dist_bins as f64;
                let hi = max_d * (b + 1) as f64 / n_dist_bins as f64;
                let members: Vec<&(usize, f64, usize, usize)> = all
                    .iter()
                    .filter(|(s, d, _, _)| *s == sector && *d > lo && *d <= hi)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let pairs: Vec<PairAtLag> = members
                    .iter()
                    .map(|&&(_, _, i, j)| PairAtLag {
                        site_i: j,
                        site_j: i,
                        lag: h,
                    })
                    .collect();
                let Ok(est) = empirical_chi(panel, &pairs, q) else {
                    continue;
                };
                let mean_d = members.iter().map(|m| m.1).sum::<f64>() / members.len() as f64;
                let mean_offset: Vector2<f64> = members
                    .iter()
                    .map(|&&(_, _, i, j)| sites[j] - sites[i])
                    .sum::<Vector2<f64>>()
                    / members.len() as f64;
                rows.push_str(&format!(
                    "{sector},{h},{mean_d},empirical,{},{}\n",
                    est.chi, est.n_pairs
                ));
                for f in fits {
                    let model_p = (f.cond_prob)(q, mean_offset, h as f64 * step);
                    rows.push_str(&format!(
                        "{sector},{h},{mean_d},{},{model_p},{}\n",
                        f.family.label(),
                        est.n_pairs
                    ));
                }
            }
        }
    }
    write_file(&out.join("cond_prob_curves.csv"), &rows)
}

fn write_rmse_table(
    out: &Path,
    panel: &ExceedancePanel,
    fits: &[FamilyFit],
    config: &RunConfig,
) -> Result<()> {
    let sims: Vec<&dyn PanelSimulator> = fits
        .iter()
        .filter_map(|f| f.simulator.as_deref())
        .map(|s| s as &dyn PanelSimulator)
        .collect();
    let mut totals = String::from("family,lag,quantile,total_rmse\n");
    let mut sites_rows = String::from("family,lag,quantile,site,rmse,observed\n");
    if sims.is_empty() || panel.n_sites() <= config.rmse.neighbor_count {
        write_file(&out.join("chi_star_rmse.csv"), &totals)?;
        return write_file(&out.join("chi_star_rmse_sites.csv"), &sites_rows);
    }
    for &h in &config.rmse.lags {
        let report = rmse_comparison(
            panel,
            &sims,
            config.rmse.n_sim,
            h,
            config.rmse.quantile,
            config.rmse.neighbor_count,
            config.seed,
        )?;
        for (m, label) in report.labels.iter().enumerate() {
            totals.push_str(&format!(
                "{label},{h},{},{}\n",
                config.rmse.quantile, report.total[m]
            ));
            for (i, r) in report.per_site[m].iter().enumerate() {
                if let (Some(r), Some(obs)) = (r, report.observed[i]) {
                    sites_rows.push_str(&format!(
                        "{label},{h},{},{i},{r},{obs}\n",
                        config.rmse.quantile
                    ));
                }
            }
        }
    }
    write_file(&out.join("chi_star_rmse.csv"), &totals)?;
    write_file(&out.join("chi_star_rmse_sites.csv"), &sites_rows)
}

fn write_snapshot(
    out: &Path,
    panel: &ExceedancePanel,
    fits: &[FamilyFit],
    config: &RunConfig,
) -> Result<()> {
    let Some(sim) = fits
        .iter()
        .find(|f| matches!(f.family, Family::G1 | Family::G2))
        .and_then(|f| f.simulator.as_deref())
    else {
        return write_file(&out.join("snapshot.csv"), "site,x,y,time,value\n");
    };
    let hours = config.snapshot_hours.max(2);
    let times: Vec<f64> = (0..hours).map(|t| t as f64).collect();
    let design = SimulationDesign::new(panel.sites().to_vec(), times, config.seed ^ 0x534E_4150)?;
    let snap = sim.simulate(&design)?;
    let mut s = String::from("site,x,y,time,value\n");
    for i in 0..snap.n_sites() {
        let xy = snap.sites()[i];
        for t in 0..snap.n_times() {
            s.push_str(&format!(
                "{i},{},{},{},{}\n",
                xy.x,
                xy.y,
                snap.times()[t],
                snap.value(i, t)
            ));
        }
    }
    write_file(&out.join("snapshot.csv"), &s)
}
