//! Deterministic synthetic test scenario: a smooth separable "truth" wind
//! field, a coarse grid sampled from it with an injected mean bias, a
//! fine raster of its long-term means, stations observing it with noise
//! and gaps, a small park fleet, and the fleet's truth generation.
//!
//! Everything derives from one seed; the same settings always produce the
//! same bundle, byte for byte.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::biascorr::StationSeries;
use crate::config::{InputPaths, SyntheticSettings, TurbineSettings};
use crate::fleet::{
    aggregate_generation, build_registry, capacity_timeseries, CapacitySeries, FleetError,
    GenerationSeries, Grouping, ParkRecord, RegionFilter, Subsystem, WindPark,
};
use crate::grid::{GridError, GridGeometry, GridPoint, MeanWindRaster, WindGrid, WindGridData};
use crate::io::{self, IoError};
use crate::timeseries::HourlySeries;
use crate::turbine::{build_power_curve, TurbineError};
use crate::validate::{daily_energy_series, ValidateError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Turbine(#[from] TurbineError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
}

/// km per degree of latitude on the sphere used by the distance metric.
const KM_PER_DEG_LAT: f64 = std::f64::consts::PI * 6371.0 / 180.0;

/// Park positions as (lat, lon) fractions of the grid span, kept inside
/// the second ring of cells so every interpolation method has a full
/// neighbourhood.
const PARK_POS: [(f64, f64); 8] = [
    (0.20, 0.20),
    (0.80, 0.20),
    (0.20, 0.80),
    (0.80, 0.80),
    (0.50, 0.50),
    (0.35, 0.50),
    (0.65, 0.50),
    (0.50, 0.35),
];

#[derive(Clone, Copy, PartialEq)]
enum StationRole {
    /// Low noise, few gaps: qualifies and passes the correlation gate.
    Clean,
    /// Heavy additive noise: qualifies but should fail the gate.
    Noisy,
    /// Gap-ridden: should fail qualification.
    Sparse,
}

/// Stations as (anchor park index, distance km, role). Offsets are pure
/// latitude shifts so the haversine distance is exactly the stated km.
const STATIONS: [(usize, f64, StationRole); 5] = [
    (0, 12.0, StationRole::Clean),
    (1, 18.0, StationRole::Noisy),
    (2, 34.0, StationRole::Clean),
    (3, 55.0, StationRole::Clean),
    (5, 25.0, StationRole::Sparse),
];

const SUBSYSTEM_OF: [Subsystem; 8] = [
    Subsystem::South,
    Subsystem::South,
    Subsystem::NorthEast,
    Subsystem::NorthEast,
    Subsystem::North,
    Subsystem::NorthEast,
    Subsystem::NorthEast,
    Subsystem::South,
];

const STATE_OF: [&str; 8] = [
    "s_west", "s_east", "ne_west", "ne_east", "n_only", "ne_west", "ne_east", "s_west",
];

/// The analytic truth field: separable in space and time,
/// `w(h) = base * (1 + spatial_amp * g(lat, lon)) * s(t) * (h/10)^alpha`.
#[derive(Debug, Clone, Copy)]
pub struct TruthField {
    base: f64,
    alpha: f64,
    diurnal_amp: f64,
    seasonal_amp: f64,
    spatial_amp: f64,
    lat0: f64,
    lon0: f64,
    lat_span: f64,
    lon_span: f64,
}

impl TruthField {
    pub fn from_settings(s: &SyntheticSettings) -> Self {
        Self {
            base: s.base_speed,
            alpha: s.alpha,
            diurnal_amp: s.diurnal_amp,
            seasonal_amp: s.seasonal_amp,
            spatial_amp: s.spatial_amp,
            lat0: s.lat0,
            lon0: s.lon0,
            lat_span: (s.nlat - 1) as f64 * s.dlat,
            lon_span: (s.nlon - 1) as f64 * s.dlon,
        }
    }

    /// Smooth spatial modulation in [-1, 1].
    fn spatial(&self, lat: f64, lon: f64) -> f64 {
        use std::f64::consts::PI;
        let y = (lat - self.lat0) / self.lat_span;
        let x = (lon - self.lon0) / self.lon_span;
        (PI * (0.2 + 0.6 * y)).sin() * (PI * (0.1 + 0.8 * x)).cos()
    }

    /// Diurnal and seasonal modulation; calendar-based so it is defined
    /// for pre-window station history too.
    fn temporal(&self, t: DateTime<Utc>) -> f64 {
        use std::f64::consts::TAU;
        let hod = t.hour() as f64 / 24.0;
        let doy = (t.ordinal() - 1) as f64 / 365.25;
        1.0 + self.diurnal_amp * (TAU * hod).sin() + self.seasonal_amp * (TAU * doy).sin()
    }

    pub fn w10(&self, lat: f64, lon: f64, t: DateTime<Utc>) -> f64 {
        self.base * (1.0 + self.spatial_amp * self.spatial(lat, lon)) * self.temporal(t)
    }

    pub fn at_height(&self, lat: f64, lon: f64, t: DateTime<Utc>, h: f64) -> f64 {
        self.w10(lat, lon, t) * (h / 10.0).powf(self.alpha)
    }

    /// Mean of the temporal modulation over a span of hours.
    fn temporal_mean(&self, hours: &[DateTime<Utc>]) -> f64 {
        hours.iter().map(|t| self.temporal(*t)).sum::<f64>() / hours.len() as f64
    }
}

/// Everything the generator produces, in memory.
pub struct SyntheticBundle {
    pub grid: WindGrid,
    pub raster: MeanWindRaster,
    pub park_records: Vec<ParkRecord>,
    pub parks: Vec<WindPark>,
    pub stations: BTreeMap<String, GridPoint>,
    pub measurements: BTreeMap<String, StationSeries>,
    /// Observed generation at every aggregation level, already scaled by
    /// the capacity bias (the "real" fleet is smaller than the records
    /// claim).
    pub observed: BTreeMap<String, GenerationSeries>,
    pub reference_capacity: BTreeMap<String, CapacitySeries>,
    /// Unscaled truth generation per park.
    pub truth_by_park: BTreeMap<String, GenerationSeries>,
}

fn window_hours(start: NaiveDate, days: u32) -> Vec<DateTime<Utc>> {
    let t0 = Utc
        .with_ymd_and_hms(start.year(), start.month(), start.day(), 0, 0, 0)
        .single()
        .expect("midnight UTC exists");
    (0..days as i64 * 24).map(|h| t0 + Duration::hours(h)).collect()
}

fn park_location(s: &SyntheticSettings, k: usize) -> (f64, f64) {
    let (fy, fx) = PARK_POS[k];
    (
        s.lat0 + fy * (s.nlat - 1) as f64 * s.dlat,
        s.lon0 + fx * (s.nlon - 1) as f64 * s.dlon,
    )
}

fn park_records(s: &SyntheticSettings) -> Vec<ParkRecord> {
    (0..PARK_POS.len())
        .map(|k| {
            let (lat, lon) = park_location(s, k);
            let capacity_mw = 30.0 + 10.0 * k as f64;
            let turbine_kw = 2000.0 + 500.0 * (k % 2) as f64;
            let n_turbines = (capacity_mw * 1000.0 / turbine_kw).round() as u32;
            ParkRecord {
                park_id: format!("p{k}"),
                name: format!("park {k}"),
                lat: Some(lat),
                lon: Some(lon),
                state: Some(STATE_OF[k].to_string()),
                subsystem: Some(SUBSYSTEM_OF[k].name().to_string()),
                capacity_mw: Some(capacity_mw),
                n_turbines: Some(n_turbines),
                turbine_kw: Some(turbine_kw),
                rotor_diameter_m: Some(80.0 + 4.0 * k as f64),
                hub_height_m: (k % 3 == 0).then_some(90.0 + k as f64),
                commissioning: Some(s.start + Duration::days(45 * (k as i64 - 2))),
            }
        })
        .collect()
}

fn station_locations(s: &SyntheticSettings) -> BTreeMap<String, GridPoint> {
    STATIONS
        .iter()
        .enumerate()
        .map(|(k, (park, km, _))| {
            let (lat, lon) = park_location(s, *park);
            // North of southern parks, south of northern ones, so the
            // offset never leaves the domain.
            let sign = if PARK_POS[*park].0 <= 0.5 { 1.0 } else { -1.0 };
            let station_lat = lat + sign * km / KM_PER_DEG_LAT;
            (
                format!("st{k}"),
                GridPoint::new(station_lat, lon).expect("inside valid range"),
            )
        })
        .collect()
}

fn days_in_month(year: i32, month: u32) -> u32 {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid");
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid");
    (next - first).num_days() as u32
}

fn station_series(
    s: &SyntheticSettings,
    truth: &TruthField,
    id: &str,
    location: GridPoint,
    role: StationRole,
    stream: u64,
) -> StationSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(stream);
    let first_year = s.start.year() - s.history_years;
    let start = Utc
        .with_ymd_and_hms(first_year, 1, 1, 0, 0, 0)
        .single()
        .expect("midnight UTC exists");
    let end_date = s.start + Duration::days(s.days as i64 - 1);
    let last = Utc
        .with_ymd_and_hms(end_date.year(), end_date.month(), end_date.day(), 23, 0, 0)
        .single()
        .expect("valid");
    let n = ((last - start).num_hours() + 1) as usize;

    let gap_prob = match role {
        StationRole::Sparse => s.sparse_gap_prob,
        _ => s.gap_prob,
    };
    let noise_sd = match role {
        StationRole::Noisy => s.outlier_noise_sd,
        _ => s.noise_sd,
    };
    let noise = Normal::new(0.0, noise_sd).expect("sd >= 0");

    // Month-level gap episodes first, then per-hour noise, in a fixed
    // draw order so the stream is reproducible.
    let mut missing = vec![false; n];
    let mut y = first_year;
    let mut m = 1;
    while NaiveDate::from_ymd_opt(y, m, 1).expect("valid") <= end_date {
        if rng.gen_bool(gap_prob) {
            let len_days = rng.gen_range(8..=25u32);
            let day = rng.gen_range(1..=days_in_month(y, m));
            let gap_start = Utc
                .with_ymd_and_hms(y, m, day, 0, 0, 0)
                .single()
                .expect("valid");
            let from = (gap_start - start).num_hours().max(0) as usize;
            let to = (from + len_days as usize * 24).min(n);
            missing[from..to].iter_mut().for_each(|b| *b = true);
        }
        m += 1;
        if m > 12 {
            m = 1;
            y += 1;
        }
    }

    let speeds = (0..n)
        .map(|i| {
            if missing[i] {
                return None;
            }
            let t = start + Duration::hours(i as i64);
            let w = truth.w10(location.lat(), location.lon(), t);
            Some((w + noise.sample(&mut rng)).max(0.0))
        })
        .collect();
    StationSeries::new(id.to_string(), location, start, speeds).expect("valid by construction")
}

/// Generate the full bundle for the given settings. The turbine settings
/// feed the truth generation so it matches what a simulation with the
/// same config would compute from perfect wind input.
pub fn generate(
    s: &SyntheticSettings,
    turbine: &TurbineSettings,
) -> Result<SyntheticBundle, SynthError> {
    let truth = TruthField::from_settings(s);
    let hours = window_hours(s.start, s.days);
    let geometry = GridGeometry::new(s.lat0, s.lon0, s.dlat, s.dlon, s.nlat, s.nlon)?;

    // Coarse grid, biased at both heights so the shear is unchanged.
    let n = geometry.len();
    let n_total = hours.len() * n;
    let mut u10 = Vec::with_capacity(n_total);
    let mut v10 = Vec::with_capacity(n_total);
    let mut u50 = Vec::with_capacity(n_total);
    let mut v50 = Vec::with_capacity(n_total);
    let direction = 0.7f64;
    let (dir_cos, dir_sin) = (direction.cos(), direction.sin());
    let h50_factor = (50.0f64 / 10.0).powf(s.alpha);
    for t in &hours {
        for i in 0..s.nlat {
            for j in 0..s.nlon {
                let w10 = truth.w10(geometry.lat(i), geometry.lon(j), *t) * (1.0 + s.mean_bias);
                let w50 = w10 * h50_factor;
                u10.push(w10 * dir_cos);
                v10.push(w10 * dir_sin);
                u50.push(w50 * dir_cos);
                v50.push(w50 * dir_sin);
            }
        }
    }
    let grid = WindGrid::new(
        geometry.clone(),
        hours.clone(),
        WindGridData {
            u10,
            v10,
            u50,
            v50,
            u2: None,
            v2: None,
            disph: vec![0.0; n],
        },
    )?;

    // Fine raster of unbiased truth means at 50 m.
    let temporal_mean = truth.temporal_mean(&hours);
    let nlat_r = ((s.nlat - 1) as f64 * s.dlat / s.raster_step + 1e-9).floor() as usize + 1;
    let nlon_r = ((s.nlon - 1) as f64 * s.dlon / s.raster_step + 1e-9).floor() as usize + 1;
    let raster_geom = GridGeometry::new(s.lat0, s.lon0, s.raster_step, s.raster_step, nlat_r, nlon_r)?;
    let mut mean50 = Vec::with_capacity(raster_geom.len());
    for i in 0..nlat_r {
        for j in 0..nlon_r {
            let spatial = 1.0 + s.spatial_amp * truth.spatial(raster_geom.lat(i), raster_geom.lon(j));
            mean50.push(s.base_speed * spatial * temporal_mean * h50_factor);
        }
    }
    let raster = MeanWindRaster::new(raster_geom, mean50, None, None)?;

    let park_records = park_records(s);
    let registry = build_registry(&park_records, None)?;
    assert!(registry.excluded.is_empty(), "synthetic records are complete");
    let parks = registry.parks;

    let stations = station_locations(s);
    let measurements = stations
        .iter()
        .enumerate()
        .map(|(k, (id, loc))| {
            let series = station_series(s, &truth, id, *loc, STATIONS[k].2, 1 + k as u64);
            (id.clone(), series)
        })
        .collect();

    // Truth generation per park, from the analytic field at hub height.
    let mut truth_by_park = BTreeMap::new();
    for park in &parks {
        let curve = build_power_curve(
            park.turbine.specific_power_wm2,
            turbine.cut_in,
            turbine.cut_out,
            turbine.air_density,
            turbine.cp,
        )?;
        let values: Vec<f64> = hours
            .iter()
            .map(|t| {
                if t.date_naive() < park.commissioning {
                    return 0.0;
                }
                let w = truth.at_height(
                    park.location.lat(),
                    park.location.lon(),
                    *t,
                    park.turbine.hub_height_m,
                );
                curve.capacity_factor(w) * park.capacity_mw
            })
            .collect();
        let power = HourlySeries::new(hours[0], values);
        let series = daily_energy_series(&park.park_id, &power)?;
        truth_by_park.insert(park.park_id.clone(), series);
    }

    // Observed generation: the truth aggregated at every level, shrunk by
    // the capacity bias.
    let mut observed = BTreeMap::new();
    for grouping in Grouping::ALL {
        for (region, series) in aggregate_generation(&parks, &truth_by_park, grouping)? {
            observed.insert(region, series.scaled(s.capacity_bias));
        }
    }

    let end = s.start + Duration::days(s.days as i64 - 1);
    let mut reference_capacity = BTreeMap::new();
    for filter in [
        RegionFilter::Country,
        RegionFilter::Subsystem(Subsystem::NorthEast),
        RegionFilter::Subsystem(Subsystem::South),
    ] {
        let cap = capacity_timeseries(&parks, &filter, s.start, end)?.scaled(s.capacity_bias);
        reference_capacity.insert(cap.region().to_string(), cap);
    }

    Ok(SyntheticBundle {
        grid,
        raster,
        park_records,
        parks,
        stations,
        measurements,
        observed,
        reference_capacity,
        truth_by_park,
    })
}

/// Write every part of the bundle whose input path is configured, in the
/// ingestion formats.
pub fn write_bundle(bundle: &SyntheticBundle, inputs: &InputPaths) -> Result<(), IoError> {
    if let Some(p) = &inputs.grid {
        io::write_grid(p, &bundle.grid)?;
    }
    if let Some(p) = &inputs.raster {
        io::write_raster(p, &bundle.raster)?;
    }
    if let Some(p) = &inputs.parks {
        io::write_parks(p, &bundle.park_records)?;
    }
    if let Some(p) = &inputs.stations {
        io::write_stations(p, &bundle.stations)?;
    }
    if let Some(p) = &inputs.measurements {
        io::write_measurements(p, &bundle.measurements)?;
    }
    if let Some(p) = &inputs.observed {
        io::write_generation(p, &bundle.observed, io::Precision::Full)?;
    }
    if let Some(p) = &inputs.reference_capacity {
        io::write_capacity(p, &bundle.reference_capacity, io::Precision::Full)?;
    }
    if let Some(p) = &inputs.hub_training {
        let pairs: Vec<(f64, f64)> = (0..7)
            .map(|k| {
                let d = 70.0 + 10.0 * k as f64;
                (d, 25.0 + 0.75 * d)
            })
            .collect();
        let mut w = String::from("diameter_m,hub_height_m\n");
        for (d, h) in pairs {
            w.push_str(&format!("{d},{h}\n"));
        }
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| IoError::Io {
                path: p.clone(),
                source: e,
            })?;
        }
        std::fs::write(p, w).map_err(|e| IoError::Io {
            path: p.clone(),
            source: e,
        })?;
    }
    Ok(())
}
