//! CSV ingestion and export.
//!
//! Two input files describe a dataset:
//!
//! * a coordinates file with header `station_id,x,y[,elev]` (kilometers;
//!   or `station_id,lon,lat[,elev]` with an equidistant projection
//!   configured), one row per station;
//! * a long-format observations file with header `station_id,time,value`;
//!   `time` is either an integer hour stamp or a calendar time
//!   (`YYYY-MM-DDTHH:MM:SS` or `YYYY-MM-DD HH:MM`), `value` is a
//!   nonnegative hourly amount and an empty field marks a missing hour.
//!
//! Stations are aligned on the union hourly grid. Duplicate
//! (station, time) rows, non-increasing times within a station, unknown
//! station ids and negative values are fatal, reported with their line
//! number. A month filter (calendar times only) marks out-of-season hours
//! missing rather than cutting the grid, so time lags never span a seasonal
//! boundary.

use chrono::{Datelike, NaiveDateTime, Timelike};
use nalgebra::Vector2;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::likelihood::ExceedancePanel;
use crate::margins::StationSeries;
use crate::{Error, Result};

/// Mean Earth radius (km) for the equidistant projection.
const EARTH_RADIUS_KM: f64 = 6371.0;

/// Coordinate handling of the coordinates file.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Projection {
    /// Coordinates are already planar kilometers.
    None,
    /// Equidistant projection of lon/lat degrees around a reference point.
    Equidistant { lon0: f64, lat0: f64 },
}

impl Projection {
    pub fn apply(&self, a: f64, b: f64) -> Vector2<f64> {
        match *self {
            Projection::None => Vector2::new(a, b),
            Projection::Equidistant { lon0, lat0 } => {
                let to_rad = std::f64::consts::PI / 180.0;
                Vector2::new(
                    EARTH_RADIUS_KM * lat0.to_radians().cos() * (a - lon0) * to_rad,
                    EARTH_RADIUS_KM * (b - lat0) * to_rad,
                )
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Projection::None => "planar-km".into(),
            Projection::Equidistant { lon0, lat0 } => {
                format!("equidistant(lon0={lon0},lat0={lat0})")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub projection: Projection,
    /// Months kept (1..=12); requires calendar time stamps.
    pub months: Option<Vec<u32>>,
    /// Stations with a larger missing fraction are dropped.
    pub missing_max_fraction: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            projection: Projection::None,
            months: None,
            missing_max_fraction: 0.7,
        }
    }
}

/// Ingestion summary: retained/excluded stations and grid bookkeeping.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub stations_total: usize,
    pub stations_kept: usize,
    /// (station id, missing fraction) of every station, kept or not.
    pub missing_fractions: Vec<(String, f64)>,
    pub excluded: Vec<String>,
    pub n_hours: usize,
    /// First hour of the grid, as found in the input.
    pub time_origin: String,
    pub projection: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TimeStamp {
    Hours(i64),
    Calendar(NaiveDateTime),
}

impl TimeStamp {
    fn hour_index(&self, origin: &TimeStamp) -> i64 {
        match (self, origin) {
            (TimeStamp::Hours(h), TimeStamp::Hours(o)) => h - o,
            (TimeStamp::Calendar(c), TimeStamp::Calendar(o)) => {
                (c.and_utc().timestamp() - o.and_utc().timestamp()) / 3600
            }
            _ => unreachable!("mixed time stamp kinds rejected at parse"),
        }
    }
}

fn parse_time(raw: &str, line: u64) -> Result<TimeStamp> {
    let raw = raw.trim();
    if let Ok(h) = raw.parse::<i64>() {
        return Ok(TimeStamp::Hours(h));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            if dt.minute() != 0 || dt.second() != 0 {
                return Err(Error::Ingest {
                    msg: format!("time '{raw}' is not on the hour"),
                    line: Some(line),
                });
            }
            return Ok(TimeStamp::Calendar(dt));
        }
    }
    Err(Error::Ingest {
        msg: format!("unparseable time '{raw}'"),
        line: Some(line),
    })
}

/// Reads the two CSV files into aligned station series on the union hourly
/// grid, with an ingestion report.
pub fn ingest(
    coords_path: &Path,
    obs_path: &Path,
    config: &IngestConfig,
) -> Result<(Vec<StationSeries>, IngestReport)> {
    // --- coordinates ---
    let mut coords: Vec<(String, Vector2<f64>, Option<f64>)> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(coords_path)?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line());
            let id = rec
                .get(0)
                .filter(|s| !s.is_empty())
                .ok_or(Error::Ingest {
                    msg: "missing station id".into(),
                    line,
                })?
                .to_string();
            let parse_f = |idx: usize, what: &str| -> Result<f64> {
                rec.get(idx)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or(Error::Ingest {
                        msg: format!("bad {what} for station {id}"),
                        line,
                    })
            };
            let a = parse_f(1, "x/lon")?;
            let b = parse_f(2, "y/lat")?;
            let elev = rec.get(3).and_then(|s| s.parse::<f64>().ok());
            if by_id.contains_key(&id) {
                return Err(Error::Ingest {
                    msg: format!("duplicate station id {id}"),
                    line,
                });
            }
            by_id.insert(id.clone(), coords.len());
            coords.push((id, config.projection.apply(a, b), elev));
        }
    }
    if coords.is_empty() {
        return Err(Error::Ingest {
            msg: "coordinates file has no stations".into(),
            line: None,
        });
    }

    // --- observations ---
    struct Obs {
        stamps: Vec<TimeStamp>,
        values: Vec<Option<f64>>,
    }
    let mut per_station: Vec<Obs> = (0..coords.len())
        .map(|_| Obs {
            stamps: Vec::new(),
            values: Vec::new(),
        })
        .collect();
    let mut kind_calendar: Option<bool> = None;
    let mut t_min: Option<TimeStamp> = None;
    let mut t_max_idx: i64 = 0;
    {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(obs_path)?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line());
            let id = rec.get(0).unwrap_or_default();
            let Some(&s_idx) = by_id.get(id) else {
                return Err(Error::Ingest {
                    msg: format!("unknown station id '{id}'"),
                    line,
                });
            };
            let stamp = parse_time(
                rec.get(1).unwrap_or_default(),
                line.unwrap_or_default(),
            )?;
            let is_cal = matches!(stamp, TimeStamp::Calendar(_));
            match kind_calendar {
                None => kind_calendar = Some(is_cal),
                Some(k) if k != is_cal => {
                    return Err(Error::Ingest {
                        msg: "mixed integer and calendar time stamps".into(),
                        line,
                    })
                }
                _ => {}
            }
            let value_raw = rec.get(2).unwrap_or_default();
            let value = if value_raw.is_empty() {
                None
            } else {
                let v = value_raw.parse::<f64>().map_err(|_| Error::Ingest {
                    msg: format!("bad value '{value_raw}'"),
                    line,
                })?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Ingest {
                        msg: format!("value {v} must be >= 0"),
                        line,
                    });
                }
                Some(v)
            };
            let obs = &mut per_station[s_idx];
            if let Some(last) = obs.stamps.last() {
                let diff = stamp.hour_index(last);
                if diff == 0 {
                    return Err(Error::Ingest {
                        msg: format!("duplicate (station {id}, time) row"),
                        line,
                    });
                }
                if diff < 0 {
                    return Err(Error::Ingest {
                        msg: format!("non-monotone time stamps for station {id}"),
                        line,
                    });
                }
            }
            obs.stamps.push(stamp);
            obs.values.push(value);

            let lower = match (&t_min, &stamp) {
                (None, _) => true,
                (Some(m), s) => s.hour_index(m) < 0,
            };
            if lower {
                t_min = Some(stamp);
            }
        }
    }
    let origin = t_min.ok_or(Error::Ingest {
        msg: "observations file is empty".into(),
        line: None,
    })?;
    for obs in &per_station {
        for s in &obs.stamps {
            t_max_idx = t_max_idx.max(s.hour_index(&origin));
        }
    }
    let n_hours = (t_max_idx + 1) as usize;

    if config.months.is_some() && kind_calendar != Some(true) {
        return Err(Error::Ingest {
            msg: "month filter requires calendar time stamps".into(),
            line: None,
        });
    }

    // Union grid alignment; out-of-season hours become missing.
    let keep_month = |idx: i64| -> bool {
        match (&config.months, &origin) {
            (Some(months), TimeStamp::Calendar(o)) => {
                let dt = *o + chrono::Duration::hours(idx);
                months.contains(&dt.month())
            }
            _ => true,
        }
    };
    let mut series = Vec::with_capacity(coords.len());
    let mut fractions = Vec::with_capacity(coords.len());
    for ((id, xy, elev), obs) in coords.iter().zip(&per_station) {
        let mut values: Vec<Option<f64>> = vec![None; n_hours];
        for (s, v) in obs.stamps.iter().zip(&obs.values) {
            let idx = s.hour_index(&origin);
            values[idx as usize] = *v;
        }
        for (idx, v) in values.iter_mut().enumerate() {
            if !keep_month(idx as i64) {
                *v = None;
            }
        }
        let s = StationSeries {
            id: id.clone(),
            coords: *xy,
            elevation: *elev,
            values,
        };
        fractions.push((id.clone(), s.missing_fraction()));
        series.push(s);
    }

    let (kept, excluded): (Vec<StationSeries>, Vec<StationSeries>) = series
        .into_iter()
        .partition(|s| s.missing_fraction() < config.missing_max_fraction);
    let report = IngestReport {
        stations_total: coords.len(),
        stations_kept: kept.len(),
        missing_fractions: fractions,
        excluded: excluded.iter().map(|s| s.id.clone()).collect(),
        n_hours,
        time_origin: match origin {
            TimeStamp::Hours(h) => h.to_string(),
            TimeStamp::Calendar(c) => c.format("%Y-%m-%dT%H:%M:%S").to_string(),
        },
        projection: config.projection.describe(),
    };
    if kept.is_empty() {
        return Err(Error::Ingest {
            msg: "no station passes the missing-fraction filter".into(),
            line: None,
        });
    }
    Ok((kept, report))
}

/// Writes station series (raw or transformed) as the two-file CSV schema
/// with integer hour stamps; ids and elevations round-trip through
/// [`ingest`].
pub fn export_series(
    series: &[StationSeries],
    coords_path: &Path,
    obs_path: &Path,
) -> Result<()> {
    let mut cw = std::io::BufWriter::new(std::fs::File::create(coords_path)?);
    let has_elev = series.iter().any(|s| s.elevation.is_some());
    writeln!(cw, "station_id,x,y{}", if has_elev { ",elev" } else { "" })?;
    for s in series {
        if has_elev {
            let e = s.elevation.map(|e| e.to_string()).unwrap_or_default();
            writeln!(cw, "{},{},{},{}", s.id, s.coords.x, s.coords.y, e)?;
        } else {
            writeln!(cw, "{},{},{}", s.id, s.coords.x, s.coords.y)?;
        }
    }
    cw.flush()?;

    let mut ow = std::io::BufWriter::new(std::fs::File::create(obs_path)?);
    writeln!(ow, "station_id,time,value")?;
    for s in series {
        for (t, v) in s.values.iter().enumerate() {
            match v {
                Some(x) => writeln!(ow, "{},{t},{x}", s.id)?,
                None => writeln!(ow, "{},{t},", s.id)?,
            }
        }
    }
    ow.flush()?;
    Ok(())
}

/// Reads aligned station series back (no filtering, no projection).
pub fn import_series(coords_path: &Path, obs_path: &Path) -> Result<Vec<StationSeries>> {
    let (series, _) = ingest(
        coords_path,
        obs_path,
        &IngestConfig {
            projection: Projection::None,
            months: None,
            missing_max_fraction: f64::INFINITY,
        },
    )?;
    Ok(series)
}

/// Writes a panel as the two-file CSV schema (integer hour stamps). The
/// `value` column of a missing cell is empty.
pub fn export_panel(panel: &ExceedancePanel, coords_path: &Path, obs_path: &Path) -> Result<()> {
    let mut cw = std::io::BufWriter::new(std::fs::File::create(coords_path)?);
    writeln!(cw, "station_id,x,y")?;
    for (i, s) in panel.sites().iter().enumerate() {
        writeln!(cw, "s{i:04},{},{}", s.x, s.y)?;
    }
    cw.flush()?;

    let mut ow = std::io::BufWriter::new(std::fs::File::create(obs_path)?);
    writeln!(ow, "station_id,time,value")?;
    for i in 0..panel.n_sites() {
        for t in 0..panel.n_times() {
            if panel.is_missing(i, t) {
                writeln!(ow, "s{i:04},{},", panel.times()[t] as i64)?;
            } else {
                writeln!(ow, "s{i:04},{},{}", panel.times()[t] as i64, panel.value(i, t))?;
            }
        }
    }
    ow.flush()?;
    Ok(())
}

/// Reads a previously exported panel back (identity margins assumed:
/// values are already on the transformed scale).
pub fn import_panel(coords_path: &Path, obs_path: &Path) -> Result<ExceedancePanel> {
    let (series, _) = ingest(
        coords_path,
        obs_path,
        &IngestConfig {
            projection: Projection::None,
            months: None,
            missing_max_fraction: 1.0 + 1e-9,
        },
    )?;
    let t_len = series[0].values.len();
    let sites: Vec<Vector2<f64>> = series.iter().map(|s| s.coords).collect();
    let mut values = vec![0.0; series.len() * t_len];
    let mut missing = vec![false; series.len() * t_len];
    for (i, s) in series.iter().enumerate() {
        for (t, v) in s.values.iter().enumerate() {
            match v {
                Some(x) => values[i * t_len + t] = *x,
                None => missing[i * t_len + t] = true,
            }
        }
    }
    let times: Vec<f64> = (0..t_len).map(|t| t as f64).collect();
    ExceedancePanel::new(sites, times, values, missing)
}
