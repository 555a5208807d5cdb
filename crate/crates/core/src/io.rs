//! CSV ingestion with file and line diagnostics, and the writers for
//! every emitted table.
//!
//! Inputs are validated structurally here (complete regular grids,
//! ordered rows, known columns); value-level invariants live with the
//! owning types. Result tables are written with 6 significant digits so
//! outputs are stable across platforms; synthetic input files are written
//! at full precision so they round-trip bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, SecondsFormat, Timelike, Utc};
use thiserror::Error;

use crate::biascorr::StationSeries;
use crate::fleet::{CapacitySeries, GenerationSeries, ParkRecord};
use crate::grid::{
    GridGeometry, GridPoint, HeightTag, MeanWindRaster, WindGrid, WindGridData,
};
use crate::validate::MetricReport;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        source: Box<csv::Error>,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Structure { path: PathBuf, msg: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        IoError::Csv {
            path: path.to_path_buf(),
            source: Box::new(source),
        }
    }

    fn malformed(path: &Path, line: u64, msg: impl Into<String>) -> Self {
        IoError::Malformed {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn structure(path: &Path, msg: impl Into<String>) -> Self {
        IoError::Structure {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IoError::csv(path, e))
}

/// Column lookup by header name.
struct Cols {
    index: BTreeMap<String, usize>,
}

impl Cols {
    fn new(headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        Self { index }
    }

    fn req(&self, path: &Path, name: &str) -> Result<usize, IoError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| IoError::structure(path, format!("missing column `{name}`")))
    }

    fn opt(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field<'r>(
    path: &Path,
    rec: &'r csv::StringRecord,
    idx: usize,
) -> Result<&'r str, IoError> {
    rec.get(idx)
        .ok_or_else(|| IoError::malformed(path, line_of(rec), "row has too few fields"))
}

fn parse_f64(path: &Path, line: u64, name: &str, s: &str) -> Result<f64, IoError> {
    s.parse()
        .map_err(|_| IoError::malformed(path, line, format!("bad {name} value `{s}`")))
}

fn parse_opt_f64(path: &Path, line: u64, name: &str, s: &str) -> Result<Option<f64>, IoError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(path, line, name, s).map(Some)
    }
}

fn parse_time(path: &Path, line: u64, s: &str) -> Result<DateTime<Utc>, IoError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| IoError::malformed(path, line, format!("bad timestamp `{s}`")))
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<NaiveDate, IoError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| IoError::malformed(path, line, format!("bad date `{s}`")))
}

fn fmt_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Regular-grid axes recovered from one complete (lat, lon) block.
struct InferredAxes {
    geometry: GridGeometry,
    lats: Vec<f64>,
    lons: Vec<f64>,
}

/// Recover grid axes from coordinates ordered by (lat, lon) and verify
/// the block is a complete regular lattice.
fn infer_axes(
    path: &Path,
    coords: &[(f64, f64)],
    first_line: u64,
) -> Result<InferredAxes, IoError> {
    if coords.is_empty() {
        return Err(IoError::structure(path, "no grid rows"));
    }
    let lat0 = coords[0].0;
    let nlon = coords.iter().take_while(|(la, _)| *la == lat0).count();
    if !coords.len().is_multiple_of(nlon) {
        return Err(IoError::structure(
            path,
            format!(
                "{} rows cannot form complete rows of {nlon} longitudes",
                coords.len()
            ),
        ));
    }
    let nlat = coords.len() / nlon;
    if nlat < 2 || nlon < 2 {
        return Err(IoError::structure(
            path,
            format!("grid must be at least 2x2, got {nlat}x{nlon}"),
        ));
    }
    let lats: Vec<f64> = (0..nlat).map(|i| coords[i * nlon].0).collect();
    let lons: Vec<f64> = (0..nlon).map(|j| coords[j].1).collect();
    let spacing = |axis: &[f64], name: &str| -> Result<f64, IoError> {
        let d = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
        // Negated so NaN fails the check too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(d > 0.0) {
            return Err(IoError::structure(path, format!("{name} axis not ascending")));
        }
        for w in axis.windows(2) {
            let gap = w[1] - w[0];
            if (gap - d).abs() > 1e-6 * d {
                return Err(IoError::structure(
                    path,
                    format!("{name} axis not uniformly spaced ({gap} vs {d})"),
                ));
            }
        }
        Ok(d)
    };
    let dlat = spacing(&lats, "lat")?;
    let dlon = spacing(&lons, "lon")?;
    for (k, (la, lo)) in coords.iter().enumerate() {
        let (i, j) = (k / nlon, k % nlon);
        if *la != lats[i] || *lo != lons[j] {
            return Err(IoError::malformed(
                path,
                first_line + k as u64,
                format!(
                    "row out of order: got ({la}, {lo}), expected ({}, {})",
                    lats[i], lons[j]
                ),
            ));
        }
    }
    let geometry = GridGeometry::new(lats[0], lons[0], dlat, dlon, nlat, nlon)
        .map_err(|e| IoError::structure(path, e.to_string()))?;
    Ok(InferredAxes {
        geometry,
        lats,
        lons,
    })
}

/// Read a gridded wind file: hourly blocks of rows ordered by (time, lat,
/// lon), constant grid across blocks, time-invariant displacement height.
pub fn read_grid(path: &Path) -> Result<WindGrid, IoError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let cols = Cols::new(&headers);
    let c_time = cols.req(path, "time")?;
    let c_lat = cols.req(path, "lat")?;
    let c_lon = cols.req(path, "lon")?;
    let c_u10 = cols.req(path, "u10")?;
    let c_v10 = cols.req(path, "v10")?;
    let c_u50 = cols.req(path, "u50")?;
    let c_v50 = cols.req(path, "v50")?;
    let c_disph = cols.req(path, "disph")?;
    let c2 = match (cols.opt("u2"), cols.opt("v2")) {
        (Some(u), Some(v)) => Some((u, v)),
        (None, None) => None,
        _ => {
            return Err(IoError::structure(
                path,
                "columns u2 and v2 must appear together",
            ))
        }
    };

    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let mut u10 = Vec::new();
    let mut v10 = Vec::new();
    let mut u50 = Vec::new();
    let mut v50 = Vec::new();
    let mut u2 = Vec::new();
    let mut v2 = Vec::new();
    let mut disph0: Vec<f64> = Vec::new();
    let mut block_coords: Vec<(f64, f64)> = Vec::new();
    let mut axes: Option<InferredAxes> = None;
    let mut row_in_block = 0usize;
    let mut block_first_line = 2u64;

    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = line_of(&rec);
        let t = parse_time(path, line, field(path, &rec, c_time)?)?;
        let lat = parse_f64(path, line, "lat", field(path, &rec, c_lat)?)?;
        let lon = parse_f64(path, line, "lon", field(path, &rec, c_lon)?)?;

        if times.last() != Some(&t) {
            if let Some(a) = &axes {
                if row_in_block != a.geometry.len() {
                    return Err(IoError::malformed(
                        path,
                        line,
                        format!(
                            "block for {} has {row_in_block} rows, expected {}",
                            times.last().expect("in a block"),
                            a.geometry.len()
                        ),
                    ));
                }
            } else if !times.is_empty() {
                axes = Some(infer_axes(path, &block_coords, block_first_line)?);
            }
            times.push(t);
            row_in_block = 0;
            block_first_line = line;
        }

        match &axes {
            None => {
                block_coords.push((lat, lon));
                disph0.push(parse_f64(path, line, "disph", field(path, &rec, c_disph)?)?);
            }
            Some(a) => {
                if row_in_block >= a.geometry.len() {
                    return Err(IoError::malformed(path, line, "too many rows in time block"));
                }
                let (i, j) = (row_in_block / a.geometry.nlon(), row_in_block % a.geometry.nlon());
                if lat != a.lats[i] || lon != a.lons[j] {
                    return Err(IoError::malformed(
                        path,
                        line,
                        format!(
                            "row out of order: got ({lat}, {lon}), expected ({}, {})",
                            a.lats[i], a.lons[j]
                        ),
                    ));
                }
                let d = parse_f64(path, line, "disph", field(path, &rec, c_disph)?)?;
                if d != disph0[row_in_block] {
                    return Err(IoError::malformed(
                        path,
                        line,
                        format!(
                            "displacement height changes over time ({d} vs {})",
                            disph0[row_in_block]
                        ),
                    ));
                }
            }
        }

        u10.push(parse_f64(path, line, "u10", field(path, &rec, c_u10)?)?);
        v10.push(parse_f64(path, line, "v10", field(path, &rec, c_v10)?)?);
        u50.push(parse_f64(path, line, "u50", field(path, &rec, c_u50)?)?);
        v50.push(parse_f64(path, line, "v50", field(path, &rec, c_v50)?)?);
        if let Some((cu, cv)) = c2 {
            u2.push(parse_f64(path, line, "u2", field(path, &rec, cu)?)?);
            v2.push(parse_f64(path, line, "v2", field(path, &rec, cv)?)?);
        }
        row_in_block += 1;
    }

    let axes = match axes {
        Some(a) => {
            if row_in_block != a.geometry.len() {
                return Err(IoError::structure(
                    path,
                    format!(
                        "final time block has {row_in_block} rows, expected {}",
                        a.geometry.len()
                    ),
                ));
            }
            a
        }
        // Single-block file: the one block is the whole grid.
        None => infer_axes(path, &block_coords, block_first_line)?,
    };
    let data = WindGridData {
        u10,
        v10,
        u50,
        v50,
        u2: c2.map(|_| u2),
        v2: c2.map(|_| v2),
        disph: disph0,
    };
    WindGrid::new(axes.geometry, times, data).map_err(|e| IoError::structure(path, e.to_string()))
}

/// Read a mean-wind raster: rows ordered by (lat, lon), one block.
pub fn read_raster(path: &Path) -> Result<MeanWindRaster, IoError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let cols = Cols::new(&headers);
    let c_lat = cols.req(path, "lat")?;
    let c_lon = cols.req(path, "lon")?;
    let c_50 = cols.req(path, "mean50")?;
    let c_100 = cols.opt("mean100");
    let c_200 = cols.opt("mean200");
    let mut coords = Vec::new();
    let mut mean50 = Vec::new();
    let mut mean100 = Vec::new();
    let mut mean200 = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = line_of(&rec);
        let lat = parse_f64(path, line, "lat", field(path, &rec, c_lat)?)?;
        let lon = parse_f64(path, line, "lon", field(path, &rec, c_lon)?)?;
        coords.push((lat, lon));
        mean50.push(parse_f64(path, line, "mean50", field(path, &rec, c_50)?)?);
        if let Some(c) = c_100 {
            mean100.push(parse_f64(path, line, "mean100", field(path, &rec, c)?)?);
        }
        if let Some(c) = c_200 {
            mean200.push(parse_f64(path, line, "mean200", field(path, &rec, c)?)?);
        }
    }
    let axes = infer_axes(path, &coords, 2)?;
    MeanWindRaster::new(
        axes.geometry,
        mean50,
        c_100.map(|_| mean100),
        c_200.map(|_| mean200),
    )
    .map_err(|e| IoError::structure(path, e.to_string()))
}

/// Read the parks file into raw records; resolution into a registry
/// happens downstream.
pub fn read_parks(path: &Path) -> Result<Vec<ParkRecord>, IoError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let cols = Cols::new(&headers);
    let c_id = cols.req(path, "park_id")?;
    let c_name = cols.req(path, "name")?;
    let c_lat = cols.req(path, "lat")?;
    let c_lon = cols.req(path, "lon")?;
    let c_state = cols.req(path, "state")?;
    let c_sub = cols.req(path, "subsystem")?;
    let c_cap = cols.req(path, "capacity_mw")?;
    let c_n = cols.req(path, "n_turbines")?;
    let c_kw = cols.req(path, "turbine_kw")?;
    let c_d = cols.req(path, "rotor_diameter_m")?;
    let c_hh = cols.req(path, "hub_height_m")?;
    let c_comm = cols.req(path, "commissioning_date")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = line_of(&rec);
        let park_id = field(path, &rec, c_id)?.to_string();
        if park_id.is_empty() {
            return Err(IoError::malformed(path, line, "empty park_id"));
        }
        let opt_str = |idx: usize| -> Result<Option<String>, IoError> {
            let s = field(path, &rec, idx)?;
            Ok((!s.is_empty()).then(|| s.to_string()))
        };
        let n_turbines = {
            let s = field(path, &rec, c_n)?;
            if s.is_empty() {
                None
            } else {
                Some(s.parse::<u32>().map_err(|_| {
                    IoError::malformed(path, line, format!("bad n_turbines value `{s}`"))
                })?)
            }
        };
        let commissioning = {
            let s = field(path, &rec, c_comm)?;
            if s.is_empty() {
                None
            } else {
                Some(parse_date(path, line, s)?)
            }
        };
        out.push(ParkRecord {
            park_id,
            name: field(path, &rec, c_name)?.to_string(),
            lat: parse_opt_f64(path, line, "lat", field(path, &rec, c_lat)?)?,
            lon: parse_opt_f64(path, line, "lon", field(path, &rec, c_lon)?)?,
            state: opt_str(c_state)?,
            subsystem: opt_str(c_sub)?,
            capacity_mw: parse_opt_f64(path, line, "capacity_mw", field(path, &rec, c_cap)?)?,
            n_turbines,
            turbine_kw: parse_opt_f64(path, line, "turbine_kw", field(path, &rec, c_kw)?)?,
            rotor_diameter_m: parse_opt_f64(
                path,
                line,
                "rotor_diameter_m",
                field(path, &rec, c_d)?,
            )?,
            hub_height_m: parse_opt_f64(path, line, "hub_height_m", field(path, &rec, c_hh)?)?,
            commissioning,
        });
    }
    Ok(out)
}

/// Read station metadata.
pub fn read_stations(path: &Path) -> Result<BTreeMap<String, GridPoint>, IoError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let cols = Cols::new(&headers);
    let c_id = cols.req(path, "station_id")?;
    let c_lat = cols.req(path, "lat")?;
    let c_lon = cols.req(path, "lon")?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = line_of(&rec);
        let id = field(path, &rec, c_id)?.to_string();
        let lat = parse_f64(path, line, "lat", field(path, &rec, c_lat)?)?;
        let lon = parse_f64(path, line, "lon", field(path, &rec, c_lon)?)?;
        let point = GridPoint::new(lat, lon)
            .map_err(|e| IoError::malformed(path, line, e.to_string()))?;
        if out.insert(id.clone(), point).is_some() {
            return Err(IoError::malformed(path, line, format!("duplicate station `{id}`")));
        }
    }
    Ok(out)
}

/// Read hourly measurements and densify per station: hours between a
/// station's first and last row with no row, or with an empty speed
/// field, are missing.
pub fn read_measurements(
    path: &Path,
    stations: &BTreeMap<String, GridPoint>,
) -> Result<BTreeMap<String, StationSeries>, IoError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let cols = Cols::new(&headers);
    let c_id = cols.req(path, "station_id")?;
    let c_time = cols.req(path, "time")?;
    let c_speed = cols.req(path, "speed_10m")?;
    let mut rows: BTreeMap<String, BTreeMap<DateTime<Utc>, Option<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = line_of(&rec);
        let id = field(path, &rec, c_id)?.to_string();
        if !stations.contains_key(&id) {
            return Err(IoError::malformed(path, line, format!("unknown station `{id}`")));
        }
        let t = parse_time(path, line, field(path, &rec, c_time)?)?;
        if t.minute() != 0 || t.second() != 0 {
            return Err(IoError::malformed(path, line, "timestamp not on the hour"));
        }
        let speed = parse_opt_f64(path, line, "speed_10m", field(path, &rec, c_speed)?)?;
        if rows.entry(id.clone()).or_default().insert(t, speed).is_some() {
            return Err(IoError::malformed(
                path,
                line,
                format!("duplicate measurement for `{id}` at {t}"),
            ));
        }
    }
    let mut out = BTreeMap::new();
    for (id, by_time) in rows {
        let first = *by_time.keys().next().expect("non-empty by construction");
        let last = *by_time.keys().next_back().expect("non-empty");
        let n = ((last - first).num_hours() + 1) as usize;
        let mut dense = vec![None; n];
        for (t, v) in by_time {
            dense[(t - first).num_hours() as usize] = v;
        }
        let series = StationSeries::new(id.clone(), stations[&id], first, dense)
            .map_err(|e| IoError::structure(path, e.to_string()))?;
        out.insert(id, series);
    }
    Ok(out)
}

/// Per-region day/value columns, still unvalidated.
type DailyColumns = BTreeMap<String, (Vec<NaiveDate>, Vec<f64>)>;

fn read_daily(path: &Path, value_col: &str) -> Result<DailyColumns, IoError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let cols = Cols::new(&headers);
    let c_region = cols.req(path, "region")?;
    let c_date = cols.req(path, "date")?;
    let c_val = cols.req(path, value_col)?;
    let mut by_region: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = line_of(&rec);
        let region = field(path, &rec, c_region)?.to_string();
        let d = parse_date(path, line, field(path, &rec, c_date)?)?;
        let v = parse_f64(path, line, value_col, field(path, &rec, c_val)?)?;
        if by_region.entry(region.clone()).or_default().insert(d, v).is_some() {
            return Err(IoError::malformed(
                path,
                line,
                format!("duplicate day {d} for region `{region}`"),
            ));
        }
    }
    Ok(by_region
        .into_iter()
        .map(|(r, m)| (r, m.into_iter().unzip()))
        .collect())
}

/// Read observed daily generation per region.
pub fn read_observed(path: &Path) -> Result<BTreeMap<String, GenerationSeries>, IoError> {
    read_daily(path, "generation_gwh")?
        .into_iter()
        .map(|(r, (dates, values))| {
            GenerationSeries::new(r.clone(), dates, values)
                .map(|s| (r, s))
                .map_err(|e| IoError::structure(path, e.to_string()))
        })
        .collect()
}

/// Read reference daily installed capacity per region.
pub fn read_reference_capacity(
    path: &Path,
) -> Result<BTreeMap<String, CapacitySeries>, IoError> {
    read_daily(path, "capacity_mw")?
        .into_iter()
        .map(|(r, (dates, values))| {
            CapacitySeries::new(r.clone(), dates, values)
                .map(|s| (r, s))
                .map_err(|e| IoError::structure(path, e.to_string()))
        })
        .collect()
}

/// Read (rotor diameter, hub height) training pairs.
pub fn read_hub_training(path: &Path) -> Result<Vec<(f64, f64)>, IoError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let cols = Cols::new(&headers);
    let c_d = cols.req(path, "diameter_m")?;
    let c_h = cols.req(path, "hub_height_m")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = line_of(&rec);
        out.push((
            parse_f64(path, line, "diameter_m", field(path, &rec, c_d)?)?,
            parse_f64(path, line, "hub_height_m", field(path, &rec, c_h)?)?,
        ));
    }
    Ok(out)
}

/// Numeric precision for emitted tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// 6 significant digits: stable result tables.
    Sig6,
    /// Shortest exact representation: synthetic inputs.
    Full,
}

impl Precision {
    fn fmt(self, x: f64) -> String {
        match self {
            Precision::Sig6 => fmt_sig6(x),
            Precision::Full => format!("{x}"),
        }
    }
}

/// Format with 6 significant digits, trailing zeros dropped.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let round_at = |v: f64, exp: i32| -> f64 {
        let scale = 10f64.powi(5 - exp);
        (v * scale).round() / scale
    };
    let exp = x.abs().log10().floor() as i32;
    let mut v = round_at(x, exp);
    // Rounding can push into the next decade (999999.7 -> 1e6).
    let exp2 = v.abs().log10().floor() as i32;
    if exp2 != exp {
        v = round_at(v, exp2);
    }
    format!("{v}")
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(path, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| IoError::io(path, e))?,
    ))
}

/// Write daily generation: `region,date,generation_gwh`.
pub fn write_generation(
    path: &Path,
    series: &BTreeMap<String, GenerationSeries>,
    precision: Precision,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    writeln!(w, "region,date,generation_gwh").map_err(werr)?;
    for (region, s) in series {
        for (d, v) in s.iter() {
            writeln!(w, "{region},{d},{}", precision.fmt(v)).map_err(werr)?;
        }
    }
    Ok(())
}

/// Write daily capacity: `region,date,capacity_mw`.
pub fn write_capacity(
    path: &Path,
    series: &BTreeMap<String, CapacitySeries>,
    precision: Precision,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    writeln!(w, "region,date,capacity_mw").map_err(werr)?;
    for (region, s) in series {
        for (d, v) in s.iter() {
            writeln!(w, "{region},{d},{}", precision.fmt(v)).map_err(werr)?;
        }
    }
    Ok(())
}

pub const METRICS_HEADER: &str = "region,method,n_days,correlation,rmse_gwh,mbe_gwh,mean_sim_gwh,mean_obs_gwh,mean_capacity_mw,rel_rmse,rel_mbe";

fn metric_row(r: &MetricReport) -> String {
    let corr = r.correlation.map(fmt_sig6).unwrap_or_default();
    format!(
        "{},{},{},{corr},{},{},{},{},{},{},{}",
        r.region,
        r.method,
        r.n_days,
        fmt_sig6(r.rmse_gwh),
        fmt_sig6(r.mbe_gwh),
        fmt_sig6(r.mean_sim_gwh),
        fmt_sig6(r.mean_obs_gwh),
        fmt_sig6(r.mean_capacity_mw),
        fmt_sig6(r.rel_rmse),
        fmt_sig6(r.rel_mbe),
    )
}

/// Write the validation report, one row per (region, method).
pub fn write_metrics(path: &Path, reports: &[MetricReport]) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    writeln!(w, "{METRICS_HEADER}").map_err(werr)?;
    for r in reports {
        writeln!(w, "{}", metric_row(r)).map_err(werr)?;
    }
    Ok(())
}

/// One distance-sweep result row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub max_km: f64,
    pub corrected_parks: usize,
    pub report: MetricReport,
}

/// Write the station-distance sweep table.
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    writeln!(w, "max_km,corrected_parks,{METRICS_HEADER}").map_err(werr)?;
    for row in rows {
        writeln!(
            w,
            "{},{},{}",
            fmt_sig6(row.max_km),
            row.corrected_parks,
            metric_row(&row.report)
        )
        .map_err(werr)?;
    }
    Ok(())
}

/// Write a wind grid in the ingestion format, full precision.
pub fn write_grid(path: &Path, grid: &WindGrid) -> Result<(), IoError> {
    use crate::grid::WindVar;
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    let g = grid.geometry();
    if grid.has_2m() {
        writeln!(w, "time,lat,lon,u10,v10,u50,v50,u2,v2,disph").map_err(werr)?;
    } else {
        writeln!(w, "time,lat,lon,u10,v10,u50,v50,disph").map_err(werr)?;
    }
    for (t, time) in grid.times().iter().enumerate() {
        let ts = fmt_time(*time);
        let u10 = grid.field(WindVar::U10, t);
        let v10 = grid.field(WindVar::V10, t);
        let u50 = grid.field(WindVar::U50, t);
        let v50 = grid.field(WindVar::V50, t);
        let disph = grid.disph_field();
        for i in 0..g.nlat() {
            for j in 0..g.nlon() {
                let k = g.flat(i, j);
                write!(
                    w,
                    "{ts},{},{},{},{},{},{}",
                    g.lat(i),
                    g.lon(j),
                    u10.values()[k],
                    v10.values()[k],
                    u50.values()[k],
                    v50.values()[k],
                )
                .map_err(werr)?;
                if grid.has_2m() {
                    write!(
                        w,
                        ",{},{}",
                        grid.field(WindVar::U2, t).values()[k],
                        grid.field(WindVar::V2, t).values()[k]
                    )
                    .map_err(werr)?;
                }
                writeln!(w, ",{}", disph.values()[k]).map_err(werr)?;
            }
        }
    }
    Ok(())
}

/// Write a mean-wind raster in the ingestion format, full precision.
pub fn write_raster(path: &Path, raster: &MeanWindRaster) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    let g = raster.geometry();
    let m50 = raster
        .plane_if_present(HeightTag::M50)
        .expect("50 m plane is mandatory");
    let m100 = raster.plane_if_present(HeightTag::M100);
    let m200 = raster.plane_if_present(HeightTag::M200);
    let mut header = "lat,lon,mean50".to_string();
    if m100.is_some() {
        header.push_str(",mean100");
    }
    if m200.is_some() {
        header.push_str(",mean200");
    }
    writeln!(w, "{header}").map_err(werr)?;
    for i in 0..g.nlat() {
        for j in 0..g.nlon() {
            let k = g.flat(i, j);
            write!(w, "{},{},{}", g.lat(i), g.lon(j), m50[k]).map_err(werr)?;
            if let Some(v) = m100 {
                write!(w, ",{}", v[k]).map_err(werr)?;
            }
            if let Some(v) = m200 {
                write!(w, ",{}", v[k]).map_err(werr)?;
            }
            writeln!(w).map_err(werr)?;
        }
    }
    Ok(())
}

/// Write park records in the ingestion format.
pub fn write_parks(path: &Path, records: &[ParkRecord]) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    writeln!(
        w,
        "park_id,name,lat,lon,state,subsystem,capacity_mw,n_turbines,turbine_kw,rotor_diameter_m,hub_height_m,commissioning_date"
    )
    .map_err(werr)?;
    let f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.park_id,
            r.name,
            f(r.lat),
            f(r.lon),
            r.state.clone().unwrap_or_default(),
            r.subsystem.clone().unwrap_or_default(),
            f(r.capacity_mw),
            r.n_turbines.map(|n| n.to_string()).unwrap_or_default(),
            f(r.turbine_kw),
            f(r.rotor_diameter_m),
            f(r.hub_height_m),
            r.commissioning.map(|d| d.to_string()).unwrap_or_default(),
        )
        .map_err(werr)?;
    }
    Ok(())
}

/// Write station metadata in the ingestion format.
pub fn write_stations(
    path: &Path,
    stations: &BTreeMap<String, GridPoint>,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    writeln!(w, "station_id,lat,lon").map_err(werr)?;
    for (id, p) in stations {
        writeln!(w, "{id},{},{}", p.lat(), p.lon()).map_err(werr)?;
    }
    Ok(())
}

/// Write measurements in the ingestion format; missing hours are simply
/// not written (densification on read restores them).
pub fn write_measurements(
    path: &Path,
    series: &BTreeMap<String, StationSeries>,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    let werr = |e| IoError::io(path, e);
    writeln!(w, "station_id,time,speed_10m").map_err(werr)?;
    for (id, s) in series {
        for (i, v) in s.speeds().iter().enumerate() {
            if let Some(v) = v {
                writeln!(w, "{id},{},{v}", fmt_time(s.time_at(i))).map_err(werr)?;
            }
        }
    }
    Ok(())
}
