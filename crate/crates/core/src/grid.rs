//! Regular latitude-longitude wind-field storage and the horizontal
//! interpolation methods used to sample it at arbitrary points.
//!
//! Four methods are provided: nearest neighbour, bilinear, bicubic
//! (separable cubic Lagrange over the surrounding 4x4 nodes) and inverse
//! distance weighting over the enclosing cell corners. All four reduce to
//! a weighted sum of node values, so repeated sampling at a fixed point
//! reuses a precomputed [`Stencil`]. Distances are great-circle with a
//! fixed mean Earth radius.

use std::fmt;

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

/// Mean Earth radius for all great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Slack, in cell units, applied at domain edges so that points placed
/// exactly on a boundary survive coordinate round-off.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("latitude {0} outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("coordinate is not finite")]
    NonFiniteCoordinate,
    #[error("point ({lat:.4}, {lon:.4}) outside the {method} domain")]
    OutOfDomain {
        lat: f64,
        lon: f64,
        method: &'static str,
    },
    #[error("unknown raster height tag `{0}`")]
    UnknownHeightTag(String),
    #[error("unknown interpolation method `{0}` (expected nn, bli, bci or idw)")]
    UnknownMethod(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// A geographic point. Longitude is normalized to [-180, 180) on
/// construction; latitude must lie in [-90, 90].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    lat: f64,
    lon: f64,
}

impl GridPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GridError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GridError::NonFiniteCoordinate);
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GridError::InvalidLatitude(lat));
        }
        // In-range longitudes pass through untouched so node coordinates
        // keep their exact bit patterns.
        let lon = if (-180.0..180.0).contains(&lon) {
            lon
        } else {
            let mut l = (lon + 180.0).rem_euclid(360.0) - 180.0;
            if l >= 180.0 {
                l -= 360.0;
            }
            l
        };
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in kilometres between two points.
pub fn haversine_km(a: &GridPoint, b: &GridPoint) -> f64 {
    let la = a.lat.to_radians();
    let lb = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Axis-aligned regular grid: node (i, j) sits at
/// (lat0 + i * dlat, lon0 + j * dlon).
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    lat0: f64,
    lon0: f64,
    dlat: f64,
    dlon: f64,
    nlat: usize,
    nlon: usize,
}

impl GridGeometry {
    pub fn new(
        lat0: f64,
        lon0: f64,
        dlat: f64,
        dlon: f64,
        nlat: usize,
        nlon: usize,
    ) -> Result<Self, GridError> {
        if ![lat0, lon0, dlat, dlon].iter().all(|v| v.is_finite()) {
            return Err(GridError::InvalidGrid("non-finite geometry field".into()));
        }
        if dlat <= 0.0 || dlon <= 0.0 {
            return Err(GridError::InvalidGrid(format!(
                "node spacing must be positive (dlat={dlat}, dlon={dlon})"
            )));
        }
        if nlat == 0 || nlon == 0 {
            return Err(GridError::InvalidGrid("empty axis".into()));
        }
        let lat_max = lat0 + dlat * (nlat - 1) as f64;
        if !(-90.0..=90.0).contains(&lat0) || !(-90.0..=90.0).contains(&lat_max) {
            return Err(GridError::InvalidGrid(format!(
                "latitude axis [{lat0}, {lat_max}] leaves [-90, 90]"
            )));
        }
        Ok(Self {
            lat0,
            lon0,
            dlat,
            dlon,
            nlat,
            nlon,
        })
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    pub fn dlat(&self) -> f64 {
        self.dlat
    }

    pub fn dlon(&self) -> f64 {
        self.dlon
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat0 + self.dlat * i as f64
    }

    pub fn lon(&self, j: usize) -> f64 {
        self.lon0 + self.dlon * j as f64
    }

    pub fn node(&self, i: usize, j: usize) -> GridPoint {
        GridPoint {
            lat: self.lat(i),
            lon: self.lon(j),
        }
    }

    /// Row-major flat index of node (i, j).
    pub fn flat(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nlat && j < self.nlon);
        i * self.nlon + j
    }

    fn lat_frac(&self, lat: f64) -> f64 {
        (lat - self.lat0) / self.dlat
    }

    /// Fractional lon index, unwrapping the query longitude into the
    /// 360-degree window centred on the grid so grids that straddle the
    /// antimeridian still resolve.
    fn lon_frac(&self, lon: f64) -> f64 {
        let span_end = self.lon0 + self.dlon * (self.nlon - 1) as f64;
        let centre = 0.5 * (self.lon0 + span_end);
        let mut l = lon;
        while l < centre - 180.0 {
            l += 360.0;
        }
        while l > centre + 180.0 {
            l -= 360.0;
        }
        (l - self.lon0) / self.dlon
    }
}

/// Locate the cell containing fractional index `f` on an axis with
/// `ncells = nnodes - 1` cells. Points exactly on the far edge fold into
/// the last cell with local coordinate 1.
fn cell_frac(f: f64, ncells: usize) -> Option<(usize, f64)> {
    if ncells == 0 || f < -EDGE_EPS || f > ncells as f64 + EDGE_EPS {
        return None;
    }
    let fc = f.clamp(0.0, ncells as f64);
    let mut i = fc.floor() as usize;
    let mut t = fc - i as f64;
    if i >= ncells {
        i = ncells - 1;
        t = 1.0;
    }
    Some((i, t))
}

/// Cubic Lagrange basis over node offsets {-1, 0, 1, 2} evaluated at the
/// local cell coordinate t in [0, 1].
fn cubic_basis(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// One time slice of a gridded scalar, row-major over (lat, lon).
#[derive(Clone, Copy)]
pub struct Field2d<'a> {
    geometry: &'a GridGeometry,
    values: &'a [f64],
}

impl<'a> Field2d<'a> {
    pub fn new(geometry: &'a GridGeometry, values: &'a [f64]) -> Result<Self, GridError> {
        if values.len() != geometry.len() {
            return Err(GridError::InvalidGrid(format!(
                "field has {} values for {} nodes",
                values.len(),
                geometry.len()
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.geometry.flat(i, j)]
    }
}

/// Supported horizontal interpolation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InterpMethod {
    Nearest,
    Bilinear,
    Bicubic,
    Idw,
}

impl InterpMethod {
    pub const ALL: [InterpMethod; 4] = [
        InterpMethod::Nearest,
        InterpMethod::Bilinear,
        InterpMethod::Bicubic,
        InterpMethod::Idw,
    ];

    pub fn parse(s: &str) -> Result<Self, GridError> {
        match s.trim() {
            "nn" => Ok(InterpMethod::Nearest),
            "bli" => Ok(InterpMethod::Bilinear),
            "bci" => Ok(InterpMethod::Bicubic),
            "idw" => Ok(InterpMethod::Idw),
            other => Err(GridError::UnknownMethod(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InterpMethod::Nearest => "nn",
            InterpMethod::Bilinear => "bli",
            InterpMethod::Bicubic => "bci",
            InterpMethod::Idw => "idw",
        }
    }
}

impl fmt::Display for InterpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Nearest grid cell to `point`: minimum great-circle distance, ties broken
/// by smaller lat index then smaller lon index. The point must lie within
/// the grid bounding box extended by half a cell on each side.
pub fn nearest_cell(
    geometry: &GridGeometry,
    point: &GridPoint,
) -> Result<(usize, usize), GridError> {
    let fi = geometry.lat_frac(point.lat);
    let fj = geometry.lon_frac(point.lon);
    let out = GridError::OutOfDomain {
        lat: point.lat,
        lon: point.lon,
        method: "nearest-neighbour",
    };
    let half = 0.5 + EDGE_EPS;
    if fi < -half
        || fi > (geometry.nlat - 1) as f64 + half
        || fj < -half
        || fj > (geometry.nlon - 1) as f64 + half
    {
        return Err(out);
    }
    // Scan in index order so equidistant nodes resolve to the smaller
    // (lat, lon) index pair. Whole rows are skipped once their latitude
    // separation alone already exceeds the best distance; the central
    // angle between two points is never less than their latitude
    // difference, so the skip is exact.
    let mut best: Option<((usize, usize), f64)> = None;
    for i in 0..geometry.nlat {
        if let Some((_, bd)) = best {
            let row_floor = (geometry.lat(i) - point.lat).abs().to_radians() * EARTH_RADIUS_KM;
            if row_floor > bd {
                continue;
            }
        }
        for j in 0..geometry.nlon {
            let d = haversine_km(point, &geometry.node(i, j));
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some(((i, j), d));
            }
        }
    }
    best.map(|(c, _)| c).ok_or(out)
}

/// A set of (flat node index, weight) terms. Every interpolation method is
/// linear in the node values, so a stencil built once for a point can be
/// applied to any number of time slices.
#[derive(Debug, Clone)]
pub struct Stencil {
    terms: Vec<(usize, f64)>,
}

impl Stencil {
    pub fn build(
        geometry: &GridGeometry,
        point: &GridPoint,
        method: InterpMethod,
    ) -> Result<Self, GridError> {
        let terms = match method {
            InterpMethod::Nearest => {
                let (i, j) = nearest_cell(geometry, point)?;
                vec![(geometry.flat(i, j), 1.0)]
            }
            InterpMethod::Bilinear => bilinear_terms(geometry, point)?,
            InterpMethod::Bicubic => bicubic_terms(geometry, point)?,
            InterpMethod::Idw => idw_terms(geometry, point)?,
        };
        Ok(Self { terms })
    }

    /// Weighted sum over a row-major node value slice.
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(k, w)| w * values[k]).sum()
    }
}

fn enclosing_cell(
    geometry: &GridGeometry,
    point: &GridPoint,
    method: &'static str,
) -> Result<(usize, f64, usize, f64), GridError> {
    let out = || GridError::OutOfDomain {
        lat: point.lat,
        lon: point.lon,
        method,
    };
    if geometry.nlat < 2 || geometry.nlon < 2 {
        return Err(out());
    }
    let (i0, ty) = cell_frac(geometry.lat_frac(point.lat), geometry.nlat - 1).ok_or_else(out)?;
    let (j0, tx) = cell_frac(geometry.lon_frac(point.lon), geometry.nlon - 1).ok_or_else(out)?;
    Ok((i0, ty, j0, tx))
}

fn bilinear_terms(
    geometry: &GridGeometry,
    point: &GridPoint,
) -> Result<Vec<(usize, f64)>, GridError> {
    let (i0, ty, j0, tx) = enclosing_cell(geometry, point, "bilinear")?;
    Ok(vec![
        (geometry.flat(i0, j0), (1.0 - ty) * (1.0 - tx)),
        (geometry.flat(i0, j0 + 1), (1.0 - ty) * tx),
        (geometry.flat(i0 + 1, j0), ty * (1.0 - tx)),
        (geometry.flat(i0 + 1, j0 + 1), ty * tx),
    ])
}

fn bicubic_terms(
    geometry: &GridGeometry,
    point: &GridPoint,
) -> Result<Vec<(usize, f64)>, GridError> {
    let out = || GridError::OutOfDomain {
        lat: point.lat,
        lon: point.lon,
        method: "bicubic",
    };
    if geometry.nlat < 4 || geometry.nlon < 4 {
        return Err(out());
    }
    let (mut i0, mut ty, mut j0, mut tx) = enclosing_cell(geometry, point, "bicubic")?;
    // A full 4x4 neighbourhood needs one node row/column beyond the cell on
    // each side. Queries landing on the node shared with a valid inner cell
    // (within round-off) are re-expressed in that cell instead of rejected.
    let fold = |c0: &mut usize, t: &mut f64, n: usize| {
        if *c0 + 2 > n - 1 && *t <= EDGE_EPS {
            *c0 -= 1;
            *t = 1.0;
        } else if *c0 == 0 && *t >= 1.0 - EDGE_EPS {
            *c0 += 1;
            *t = 0.0;
        }
    };
    fold(&mut i0, &mut ty, geometry.nlat);
    fold(&mut j0, &mut tx, geometry.nlon);
    if i0 == 0 || j0 == 0 || i0 + 2 > geometry.nlat - 1 || j0 + 2 > geometry.nlon - 1 {
        return Err(out());
    }
    let wlat = cubic_basis(ty);
    let wlon = cubic_basis(tx);
    let mut terms = Vec::with_capacity(16);
    for (a, wa) in wlat.iter().enumerate() {
        for (b, wb) in wlon.iter().enumerate() {
            terms.push((geometry.flat(i0 - 1 + a, j0 - 1 + b), wa * wb));
        }
    }
    Ok(terms)
}

fn idw_terms(geometry: &GridGeometry, point: &GridPoint) -> Result<Vec<(usize, f64)>, GridError> {
    let (i0, _, j0, _) = enclosing_cell(geometry, point, "inverse-distance")?;
    let corners = [(i0, j0), (i0, j0 + 1), (i0 + 1, j0), (i0 + 1, j0 + 1)];
    let mut dists = [0.0; 4];
    for (k, &(i, j)) in corners.iter().enumerate() {
        dists[k] = haversine_km(point, &geometry.node(i, j));
    }
    // A zero distance means the query sits on a node: return it exactly.
    if let Some(k) = dists.iter().position(|&d| d == 0.0) {
        let (i, j) = corners[k];
        return Ok(vec![(geometry.flat(i, j), 1.0)]);
    }
    let wsum: f64 = dists.iter().map(|d| 1.0 / d).sum();
    Ok(corners
        .iter()
        .zip(&dists)
        .map(|(&(i, j), &d)| (geometry.flat(i, j), (1.0 / d) / wsum))
        .collect())
}

/// Separable linear interpolation over the enclosing cell corners. The
/// point must lie inside the grid bounding box.
pub fn bilinear(field: &Field2d, point: &GridPoint) -> Result<f64, GridError> {
    let stencil = Stencil {
        terms: bilinear_terms(field.geometry, point)?,
    };
    Ok(stencil.apply(field.values))
}

/// Separable cubic Lagrange interpolation over the surrounding 4x4 nodes.
/// Returns the (unclamped) value together with a flag that is true when
/// overshoot produced a negative value. The point must lie in the interior
/// region where the full neighbourhood exists.
pub fn bicubic(field: &Field2d, point: &GridPoint) -> Result<(f64, bool), GridError> {
    let stencil = Stencil {
        terms: bicubic_terms(field.geometry, point)?,
    };
    let v = stencil.apply(field.values);
    Ok((v, v < 0.0))
}

/// Inverse-distance weighting (exponent 1, great-circle distances) over
/// the enclosing cell corners. A query exactly on a node returns the node
/// value.
pub fn idw(field: &Field2d, point: &GridPoint) -> Result<f64, GridError> {
    let stencil = Stencil {
        terms: idw_terms(field.geometry, point)?,
    };
    Ok(stencil.apply(field.values))
}

/// Wind component variables stored per time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindVar {
    U10,
    V10,
    U50,
    V50,
    U2,
    V2,
}

/// Per-variable node data backing a [`WindGrid`], row-major over
/// (time, lat, lon) per variable. The 2 m components are optional.
#[derive(Debug)]
pub struct WindGridData {
    pub u10: Vec<f64>,
    pub v10: Vec<f64>,
    pub u50: Vec<f64>,
    pub v50: Vec<f64>,
    pub u2: Option<Vec<f64>>,
    pub v2: Option<Vec<f64>>,
    /// Displacement height per node, m, time-invariant.
    pub disph: Vec<f64>,
}

/// Hourly gridded wind components at two (optionally three) heights plus a
/// static displacement-height field.
#[derive(Debug)]
pub struct WindGrid {
    geometry: GridGeometry,
    times: Vec<DateTime<Utc>>,
    data: WindGridData,
}

impl WindGrid {
    pub fn new(
        geometry: GridGeometry,
        times: Vec<DateTime<Utc>>,
        data: WindGridData,
    ) -> Result<Self, GridError> {
        if times.is_empty() {
            return Err(GridError::InvalidGrid("no time steps".into()));
        }
        for w in times.windows(2) {
            if w[1] - w[0] != Duration::hours(1) {
                return Err(GridError::InvalidGrid(format!(
                    "time axis not hourly between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        let expect = times.len() * geometry.len();
        let check = |name: &str, v: &[f64], n: usize| -> Result<(), GridError> {
            if v.len() != n {
                return Err(GridError::InvalidGrid(format!(
                    "{name} has {} values, expected {n}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(GridError::InvalidGrid(format!("{name} has non-finite values")));
            }
            Ok(())
        };
        check("u10", &data.u10, expect)?;
        check("v10", &data.v10, expect)?;
        check("u50", &data.u50, expect)?;
        check("v50", &data.v50, expect)?;
        match (&data.u2, &data.v2) {
            (Some(u2), Some(v2)) => {
                check("u2", u2, expect)?;
                check("v2", v2, expect)?;
            }
            (None, None) => {}
            _ => {
                return Err(GridError::InvalidGrid(
                    "u2 and v2 must be present together".into(),
                ))
            }
        }
        check("disph", &data.disph, geometry.len())?;
        if data.disph.iter().any(|d| *d < 0.0) {
            return Err(GridError::InvalidGrid("negative displacement height".into()));
        }
        Ok(Self {
            geometry,
            times,
            data,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn times(&self) -> &[DateTime<Utc>] {
        &self.times
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn has_2m(&self) -> bool {
        self.data.u2.is_some()
    }

    /// Node values of `var` at time step `t`.
    ///
    /// Panics if `t` is out of range or a 2 m variable is requested from a
    /// grid without 2 m components; callers gate on [`WindGrid::has_2m`].
    pub fn field(&self, var: WindVar, t: usize) -> Field2d<'_> {
        let n = self.geometry.len();
        let all = match var {
            WindVar::U10 => &self.data.u10,
            WindVar::V10 => &self.data.v10,
            WindVar::U50 => &self.data.u50,
            WindVar::V50 => &self.data.v50,
            WindVar::U2 => self.data.u2.as_ref().expect("grid has no 2 m components"),
            WindVar::V2 => self.data.v2.as_ref().expect("grid has no 2 m components"),
        };
        Field2d {
            geometry: &self.geometry,
            values: &all[t * n..(t + 1) * n],
        }
    }

    pub fn disph_field(&self) -> Field2d<'_> {
        Field2d {
            geometry: &self.geometry,
            values: &self.data.disph,
        }
    }
}

/// Height tags a mean-wind raster may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightTag {
    M50,
    M100,
    M200,
}

impl HeightTag {
    pub fn parse(s: &str) -> Result<Self, GridError> {
        match s.trim() {
            "mean50" | "50" => Ok(HeightTag::M50),
            "mean100" | "100" => Ok(HeightTag::M100),
            "mean200" | "200" => Ok(HeightTag::M200),
            other => Err(GridError::UnknownHeightTag(other.to_string())),
        }
    }
}

/// High-resolution raster of long-term mean wind speeds at fixed heights.
/// 50 m is always present; 100 m and 200 m are optional columns.
#[derive(Debug)]
pub struct MeanWindRaster {
    geometry: GridGeometry,
    mean50: Vec<f64>,
    mean100: Option<Vec<f64>>,
    mean200: Option<Vec<f64>>,
}

impl MeanWindRaster {
    pub fn new(
        geometry: GridGeometry,
        mean50: Vec<f64>,
        mean100: Option<Vec<f64>>,
        mean200: Option<Vec<f64>>,
    ) -> Result<Self, GridError> {
        let check = |name: &str, v: &[f64]| -> Result<(), GridError> {
            if v.len() != geometry.len() {
                return Err(GridError::InvalidGrid(format!(
                    "{name} has {} values for {} nodes",
                    v.len(),
                    geometry.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite() && *x >= 0.0) {
                return Err(GridError::InvalidGrid(format!(
                    "{name} has negative or non-finite values"
                )));
            }
            Ok(())
        };
        check("mean50", &mean50)?;
        if let Some(v) = &mean100 {
            check("mean100", v)?;
        }
        if let Some(v) = &mean200 {
            check("mean200", v)?;
        }
        Ok(Self {
            geometry,
            mean50,
            mean100,
            mean200,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    /// Node values for a height, if that plane was provided.
    pub fn plane_if_present(&self, tag: HeightTag) -> Option<&[f64]> {
        self.plane(tag).ok()
    }

    fn plane(&self, tag: HeightTag) -> Result<&[f64], GridError> {
        let missing = |name: &str| GridError::UnknownHeightTag(name.to_string());
        match tag {
            HeightTag::M50 => Ok(&self.mean50),
            HeightTag::M100 => self.mean100.as_deref().ok_or_else(|| missing("mean100")),
            HeightTag::M200 => self.mean200.as_deref().ok_or_else(|| missing("mean200")),
        }
    }
}

/// Mean wind speed at the raster cell nearest to `point` for the given
/// height tag. Errors when the tag's plane is absent or the point is
/// outside the raster domain.
pub fn raster_lookup(
    raster: &MeanWindRaster,
    point: &GridPoint,
    tag: HeightTag,
) -> Result<f64, GridError> {
    let plane = raster.plane(tag)?;
    let (i, j) = nearest_cell(&raster.geometry, point)?;
    Ok(plane[raster.geometry.flat(i, j)])
}
