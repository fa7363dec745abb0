//! Command-line interface for the space-time exceedance toolkit.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use stex::io::{export_panel, export_series, import_panel, ingest, IngestConfig, Projection};
use stex::margins::{QuantileConvention, StationSeries};
use stex::pipeline::{
    panel_from_series, read_margins_csv, run, run_diagnose_stage, run_fit_stage,
    run_margins_stage, Family, RunConfig,
};
use stex::simulate::{simulate_panel, SimulationDesign};

#[derive(Parser)]
#[command(
    name = "stex",
    about = "Space-time threshold-exceedance modeling: ingestion, margins, censored pairwise fits, simulation and tail diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputFiles {
    /// Coordinates CSV (station_id,x,y[,elev])
    #[arg(long)]
    coords: PathBuf,
    /// Observations CSV (station_id,time,value; empty value = missing)
    #[arg(long)]
    obs: PathBuf,
}

#[derive(Args, Clone)]
struct ProjectionArgs {
    /// Reference longitude of the equidistant projection (inputs are lon/lat)
    #[arg(long)]
    lon0: Option<f64>,
    /// Reference latitude of the equidistant projection
    #[arg(long)]
    lat0: Option<f64>,
}

impl ProjectionArgs {
    fn to_projection(&self) -> anyhow::Result<Projection> {
        match (self.lon0, self.lat0) {
            (None, None) => Ok(Projection::None),
            (Some(lon0), Some(lat0)) => Ok(Projection::Equidistant { lon0, lat0 }),
            _ => bail!("--lon0 and --lat0 must be given together"),
        }
    }
}

fn parse_months(raw: &str) -> anyhow::Result<Vec<u32>> {
    raw.split(',')
        .map(|m| {
            m.trim()
                .parse::<u32>()
                .ok()
                .filter(|&v| (1..=12).contains(&v))
                .with_context(|| format!("bad month '{m}'"))
        })
        .collect()
}

#[derive(Subcommand)]
enum Command {
    /// Align raw station CSVs on the union hourly grid
    Ingest {
        #[command(flatten)]
        input: InputFiles,
        #[command(flatten)]
        projection: ProjectionArgs,
        /// Output directory (aligned_coords.csv, aligned_obs.csv, ingest_report.csv)
        #[arg(long, default_value = "ingest_out")]
        out_dir: PathBuf,
        /// Drop stations with a missing fraction at or above this
        #[arg(long, default_value_t = 0.7)]
        missing_max: f64,
        /// Months to keep, e.g. "9,10,11" (calendar time stamps only)
        #[arg(long)]
        months: Option<String>,
    },
    /// Fit per-station thresholds and generalized-Pareto excess margins
    Margins {
        #[command(flatten)]
        input: InputFiles,
        /// Threshold quantile order
        #[arg(long, default_value_t = 0.99)]
        q0: f64,
        /// Quantile convention: all-hours or wet-hours
        #[arg(long, default_value = "all-hours")]
        convention: String,
        /// Minimum number of excesses per station
        #[arg(long, default_value_t = 30)]
        min_excesses: usize,
        /// Output directory (margins.csv)
        #[arg(long, default_value = "margins_out")]
        out_dir: PathBuf,
    },
    /// Transform aligned series to the common censored margin scale
    Transform {
        #[command(flatten)]
        input: InputFiles,
        /// margins.csv from the margins stage
        #[arg(long)]
        margins: PathBuf,
        /// Threshold quantile order (sets kappa = q0/(1-q0))
        #[arg(long, default_value_t = 0.99)]
        q0: f64,
        /// Output directory (transformed_coords.csv, transformed_obs.csv)
        #[arg(long, default_value = "transform_out")]
        out_dir: PathBuf,
    },
    /// Fit one dependence family on a transformed panel
    Fit {
        #[command(flatten)]
        input: InputFiles,
        /// Family: g1, g2, c1, c2 or c3
        #[arg(long)]
        family: String,
        /// Threshold quantile order used in the transform
        #[arg(long, default_value_t = 0.99)]
        q0: f64,
        /// Spatial pair cutoff (km)
        #[arg(long, default_value_t = 110.0)]
        delta_s: f64,
        /// Temporal pair cutoff (grid steps)
        #[arg(long, default_value_t = 10)]
        delta_t: usize,
        #[arg(long, default_value_t = 4000)]
        max_eval: usize,
        #[arg(long, default_value_t = 1)]
        n_starts: usize,
        /// Godambe subsampling blocks (0 = automatic)
        #[arg(long, default_value_t = 0)]
        godambe_blocks: usize,
        /// Godambe block length in grid steps (0 = automatic)
        #[arg(long, default_value_t = 0)]
        block_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory (fit_<family>.kv)
        #[arg(long, default_value = "fit_out")]
        out_dir: PathBuf,
    },
    /// Simulate an exceedance panel from hierarchical parameters
    Simulate {
        /// Ellipse semi-axis along its rotated x axis (km)
        #[arg(long, default_value_t = 0.2)]
        semi_x: f64,
        /// Ellipse semi-axis along its rotated y axis (km)
        #[arg(long, default_value_t = 0.2)]
        semi_y: f64,
        /// Ellipse rotation (radians)
        #[arg(long, default_value_t = 0.0)]
        rotation: f64,
        /// Cylinder duration (hours)
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.0)]
        velocity_x: f64,
        #[arg(long, default_value_t = 0.0)]
        velocity_y: f64,
        /// Censoring rate parameter
        #[arg(long, default_value_t = 9.0)]
        kappa: f64,
        /// Sites file (station_id,x,y); random uniform sites when absent
        #[arg(long)]
        sites: Option<PathBuf>,
        /// Number of random sites on [0,1]^2 when --sites is absent
        #[arg(long, default_value_t = 30)]
        n_sites: usize,
        /// Number of hourly time steps
        #[arg(long, default_value_t = 2000)]
        t_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory (sim_coords.csv, sim_obs.csv)
        #[arg(long, default_value = "simulate_out")]
        out_dir: PathBuf,
    },
    /// Empirical chi/chibar curves with stationary-bootstrap bands
    Diagnose {
        #[command(flatten)]
        input: InputFiles,
        /// Quantiles, e.g. "0.99,0.995"
        #[arg(long, default_value = "0.99,0.995")]
        q: String,
        #[arg(long, default_value_t = 200)]
        n_boot: usize,
        /// Mean geometric block length (hours)
        #[arg(long, default_value_t = 480.0)]
        mean_block: f64,
        /// Largest temporal lag of the chi curves
        #[arg(long, default_value_t = 10)]
        max_lag: usize,
        /// Equal-count spatial distance bins
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory (chi_curves.csv)
        #[arg(long, default_value = "diagnose_out")]
        out_dir: PathBuf,
    },
    /// Full pipeline: ingest, margins, transform, fits, CLIC table,
    /// diagnostics, RMSE comparison, snapshot
    Compare {
        #[command(flatten)]
        input: InputFiles,
        #[command(flatten)]
        projection: ProjectionArgs,
        #[arg(long, default_value = "run_out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        q0: f64,
        /// Quantile convention: all-hours or wet-hours
        #[arg(long, default_value = "all-hours")]
        convention: String,
        #[arg(long)]
        months: Option<String>,
        #[arg(long, default_value_t = 0.7)]
        missing_max: f64,
        #[arg(long, default_value_t = 30)]
        min_excesses: usize,
        #[arg(long, default_value_t = 110.0)]
        delta_s: f64,
        #[arg(long, default_value_t = 10)]
        delta_t: usize,
        /// Families to fit, e.g. "g1,g2,c1"
        #[arg(long, default_value = "g1,g2,c1,c2,c3")]
        families: String,
        #[arg(long, default_value_t = 4000)]
        max_eval: usize,
        #[arg(long, default_value_t = 1)]
        n_starts: usize,
        #[arg(long, default_value_t = 0)]
        godambe_blocks: usize,
        #[arg(long, default_value_t = 0)]
        block_len: usize,
        #[arg(long, default_value_t = 200)]
        n_boot: usize,
        #[arg(long, default_value_t = 480.0)]
        mean_block: f64,
        /// Quantiles of the chi curves
        #[arg(long, default_value = "0.99,0.995")]
        chi_q: String,
        #[arg(long, default_value_t = 50)]
        rmse_sims: usize,
        #[arg(long, default_value_t = 0.995)]
        rmse_q: f64,
        #[arg(long, default_value_t = 48)]
        snapshot_hours: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_convention(raw: &str) -> anyhow::Result<QuantileConvention> {
    match raw {
        "all-hours" => Ok(QuantileConvention::AllHours),
        "wet-hours" => Ok(QuantileConvention::WetHours),
        other => bail!("unknown convention '{other}' (all-hours or wet-hours)"),
    }
}

fn parse_q_list(raw: &str) -> anyhow::Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|q| (0.0..1.0).contains(q) && *q > 0.0)
                .with_context(|| format!("bad quantile '{s}'"))
        })
        .collect()
}

fn main() {
    if let Err(e) = dispatch() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Ingest {
            input,
            projection,
            out_dir,
            missing_max,
            months,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let cfg = IngestConfig {
                projection: projection.to_projection()?,
                months: months.as_deref().map(parse_months).transpose()?,
                missing_max_fraction: missing_max,
            };
            let (series, report) = ingest(&input.coords, &input.obs, &cfg)?;
            export_series(
                &series,
                &out_dir.join("aligned_coords.csv"),
                &out_dir.join("aligned_obs.csv"),
            )?;
            let mut s = String::from("station_id,missing_fraction,kept\n");
            for (id, frac) in &report.missing_fractions {
                s.push_str(&format!("{id},{frac},{}\n", !report.excluded.contains(id)));
            }
            std::fs::write(out_dir.join("ingest_report.csv"), s)?;
            println!(
                "ingested {} stations ({} kept), {} hours from {} [{}]",
                report.stations_total,
                report.stations_kept,
                report.n_hours,
                report.time_origin,
                report.projection
            );
            Ok(())
        }
        Command::Margins {
            input,
            q0,
            convention,
            min_excesses,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let series = stex::io::import_series(&input.coords, &input.obs)?;
            let mut cfg = RunConfig::new(input.coords, input.obs, out_dir.clone());
            cfg.threshold_order = q0;
            cfg.quantile_convention = parse_convention(&convention)?;
            cfg.min_exceedances = min_excesses;
            let (_, fits) = run_margins_stage(&out_dir, series, &cfg)?;
            println!("fitted {} station margins -> {}", fits.len(), out_dir.join("margins.csv").display());
            Ok(())
        }
        Command::Transform {
            input,
            margins,
            q0,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let series = stex::io::import_series(&input.coords, &input.obs)?;
            let fits = read_margins_csv(&margins)?;
            // align series with the fitted stations, in fit order
            let by_id: std::collections::HashMap<&str, &StationSeries> =
                series.iter().map(|s| (s.id.as_str(), s)).collect();
            let mut ordered = Vec::with_capacity(fits.len());
            for f in &fits {
                let s = by_id
                    .get(f.station.as_str())
                    .with_context(|| format!("station {} not in the aligned series", f.station))?;
                ordered.push((*s).clone());
            }
            let (panel, kappa) = stex::margins::to_common_margins(&ordered, &fits, q0)?;
            let transformed: Vec<StationSeries> = ordered
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
                &out_dir.join("transformed_coords.csv"),
                &out_dir.join("transformed_obs.csv"),
            )?;
            println!("transformed {} stations; kappa = {kappa}", ordered.len());
            Ok(())
        }
        Command::Fit {
            input,
            family,
            q0,
            delta_s,
            delta_t,
            max_eval,
            n_starts,
            godambe_blocks,
            block_len,
            seed,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let family = Family::parse(&family)?;
            let series = stex::io::import_series(&input.coords, &input.obs)?;
            let panel = panel_from_series(&series)?;
            let mut cfg = RunConfig::new(input.coords, input.obs, out_dir.clone());
            cfg.threshold_order = q0;
            cfg.delta_s = delta_s;
            cfg.delta_t = delta_t;
            cfg.optimizer.max_eval = max_eval;
            cfg.optimizer.n_starts = n_starts;
            cfg.godambe_blocks = godambe_blocks;
            cfg.godambe_block_len = block_len;
            cfg.seed = seed;
            let kappa = q0 / (1.0 - q0);
            run_fit_stage(&out_dir, &panel, family, kappa, &cfg)?;
            println!(
                "fit written -> {}",
                out_dir.join(format!("fit_{}.kv", family.label())).display()
            );
            Ok(())
        }
        Command::Simulate {
            semi_x,
            semi_y,
            rotation,
            duration,
            velocity_x,
            velocity_y,
            kappa,
            sites,
            n_sites,
            t_len,
            seed,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let kernel = stex::CylinderKernel::new(
                semi_x,
                semi_y,
                rotation,
                duration,
                nalgebra_vec(velocity_x, velocity_y),
            )?;
            let params = stex::ModelParams::standard(kernel, kappa)?;
            let site_list = match sites {
                Some(path) => read_sites(&path)?,
                None => {
                    use rand::Rng;
                    let mut rng = rand_seed(seed);
                    (0..n_sites)
                        .map(|_| nalgebra_vec(rng.gen::<f64>(), rng.gen::<f64>()))
                        .collect()
                }
            };
            let times: Vec<f64> = (0..t_len).map(|t| t as f64).collect();
            let design = SimulationDesign::new(site_list, times, seed)?;
            let panel = simulate_panel(&design, &params)?;
            export_panel(
                &panel,
                &out_dir.join("sim_coords.csv"),
                &out_dir.join("sim_obs.csv"),
            )?;
            let mut manifest = String::new();
            manifest.push_str(&format!("seed = {seed}\n"));
            manifest.push_str(&format!(
                "params = semi_x={semi_x} semi_y={semi_y} rotation={rotation} duration={duration} velocity=({velocity_x},{velocity_y}) kappa={kappa}\n"
            ));
            std::fs::write(out_dir.join("sim_manifest.txt"), manifest)?;
            println!(
                "simulated {} sites x {} hours -> {}",
                panel.n_sites(),
                panel.n_times(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Diagnose {
            input,
            q,
            n_boot,
            mean_block,
            max_lag,
            bins,
            seed,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let panel = import_panel(&input.coords, &input.obs)?;
            let mut cfg = RunConfig::new(input.coords, input.obs, out_dir.clone());
            cfg.chi_quantiles = parse_q_list(&q)?;
            cfg.bootstrap.n_boot = n_boot;
            cfg.bootstrap.mean_block = mean_block;
            cfg.chi_max_lag = max_lag;
            cfg.spatial_bins = bins;
            cfg.seed = seed;
            run_diagnose_stage(&out_dir, &panel, &cfg)?;
            println!("chi curves -> {}", out_dir.join("chi_curves.csv").display());
            Ok(())
        }
        Command::Compare {
            input,
            projection,
            out_dir,
            q0,
            convention,
            months,
            missing_max,
            min_excesses,
            delta_s,
            delta_t,
            families,
            max_eval,
            n_starts,
            godambe_blocks,
            block_len,
            n_boot,
            mean_block,
            chi_q,
            rmse_sims,
            rmse_q,
            snapshot_hours,
            seed,
        } => {
            let mut cfg = RunConfig::new(input.coords, input.obs, out_dir);
            cfg.threshold_order = q0;
            cfg.quantile_convention = parse_convention(&convention)?;
            cfg.projection = projection.to_projection()?;
            cfg.months = months.as_deref().map(parse_months).transpose()?;
            cfg.missing_max_fraction = missing_max;
            cfg.min_exceedances = min_excesses;
            cfg.delta_s = delta_s;
            cfg.delta_t = delta_t;
            cfg.families = families
                .split(',')
                .map(|f| Family::parse(f.trim()))
                .collect::<stex::Result<Vec<_>>>()?;
            cfg.optimizer.max_eval = max_eval;
            cfg.optimizer.n_starts = n_starts;
            cfg.godambe_blocks = godambe_blocks;
            cfg.godambe_block_len = block_len;
            cfg.bootstrap.n_boot = n_boot;
            cfg.bootstrap.mean_block = mean_block;
            cfg.chi_quantiles = parse_q_list(&chi_q)?;
            cfg.rmse.n_sim = rmse_sims;
            cfg.rmse.quantile = rmse_q;
            cfg.snapshot_hours = snapshot_hours;
            cfg.seed = seed;
            let out = run(&cfg)?;
            println!("run complete -> {}", out.display());
            Ok(())
        }
    }
}

fn nalgebra_vec(x: f64, y: f64) -> nalgebra::Vector2<f64> {
    nalgebra::Vector2::new(x, y)
}

fn rand_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Reads a coordinates CSV (station_id,x,y) into site positions.
fn read_sites(path: &std::path::Path) -> anyhow::Result<Vec<nalgebra::Vector2<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut sites = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let x: f64 = rec.get(1).context("missing x")?.parse()?;
        let y: f64 = rec.get(2).context("missing y")?.parse()?;
        sites.push(nalgebra::Vector2::new(x, y));
    }
    if sites.is_empty() {
        bail!("sites file has no rows");
    }
    Ok(sites)
}
