//! Disk-to-disk pipeline stages: synthetic input generation, simulation,
//! validation, and the station-distance sweep, plus the combined full
//! run and the run manifest.
//!
//! Every stage reads its inputs from the configured paths and writes its
//! outputs under the configured output directory, so running stages
//! separately is identical to the fused run. All iteration is over
//! sorted maps and the configured method order, keeping output bytes
//! deterministic for a given config and inputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use thiserror::Error;

use crate::biascorr::{
    apply_hm_correction, apply_mean_correction, clean_constant_runs, correction_gate, gwa_factor,
    hm_factors, match_station, mean_factor, paired_means, qualify_station, BiasCorrError,
    CorrectionMethod, GateOutcome, HmBinning, MonthMask, QualificationRules, StationSeries,
};
use crate::config::{Config, ConfigError, HubModelSource};
use crate::fleet::{
    aggregate_generation, build_registry, capacity_correction_factor, capacity_timeseries,
    CapacitySeries, FleetError, GenerationSeries, Grouping, RegionFilter, Subsystem, WindPark,
    COUNTRY_LABEL,
};
use crate::grid::{
    raster_lookup, GridError, GridPoint, HeightTag, InterpMethod, MeanWindRaster, Stencil,
    WindGrid, WindVar,
};
use crate::io::{self, IoError, Precision, SweepRow};
use crate::synthetic::{self, SynthError};
use crate::timeseries::HourlySeries;
use crate::turbine::{build_power_curve, fit_hub_height_model, HubHeightModel, TurbineError};
use crate::validate::{daily_energy_series, evaluate, MetricReport, ValidateError};
use crate::vertical::{effective_speed, hub_speed, LevelSpeeds};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Turbine(#[from] TurbineError),
    #[error(transparent)]
    BiasCorr(#[from] BiasCorrError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{0} must be configured for this stage")]
    MissingInput(&'static str),
    #[error("window {0}..{1} does not intersect the grid hours")]
    EmptyWindow(NaiveDate, NaiveDate),
    #[error("vertical method {0} needs 2 m components the grid does not provide")]
    MissingLowLevel(&'static str),
    #[error("no usable parks after exclusions")]
    NoParks,
    #[error("region label `{0}` appears at two aggregation levels")]
    AmbiguousRegion(String),
    #[error("observed series for `{0}` not found")]
    MissingObserved(String),
}

impl PipelineError {
    /// All pipeline failures are configuration or ingestion problems.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

fn required<'a>(
    path: &'a Option<PathBuf>,
    key: &'static str,
) -> Result<&'a Path, PipelineError> {
    path.as_deref().ok_or(PipelineError::MissingInput(key))
}

/// Why a park did not receive its requested correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackReason {
    NoStation,
    LowCorrelation,
    InsufficientPairs,
    DegenerateFactor,
}

impl FallbackReason {
    pub fn name(&self) -> &'static str {
        match self {
            FallbackReason::NoStation => "no_station",
            FallbackReason::LowCorrelation => "low_correlation",
            FallbackReason::InsufficientPairs => "insufficient_pairs",
            FallbackReason::DegenerateFactor => "degenerate_factor",
        }
    }
}

/// Per-park correction outcome, recorded in the manifest.
#[derive(Debug, Clone)]
pub struct ParkCorrection {
    pub park_id: String,
    pub requested: CorrectionMethod,
    pub effective: CorrectionMethod,
    pub station: Option<(String, f64)>,
    pub fallback: Option<FallbackReason>,
    /// Hours the vertical extrapolation predicted a negative speed.
    pub negative_hours: usize,
    /// Hours the shear derivation was degenerate and the fallback
    /// exponent was used.
    pub shear_fallback_hours: usize,
}

/// One (interpolation, correction) combination.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub tag: String,
    pub interp: InterpMethod,
    pub correction: CorrectionMethod,
    pub parks: Vec<ParkCorrection>,
}

impl MethodRun {
    pub fn corrected(&self) -> usize {
        self.parks
            .iter()
            .filter(|p| p.effective != CorrectionMethod::None)
            .count()
    }

    pub fn degraded(&self) -> usize {
        self.parks.iter().filter(|p| p.fallback.is_some()).count()
    }
}

#[derive(Debug)]
pub struct SimulateReport {
    pub methods: Vec<MethodRun>,
    pub excluded: Vec<(String, String)>,
    pub capacity_factors: BTreeMap<String, f64>,
    pub degraded_fraction: f64,
    pub degraded_beyond_tolerance: bool,
}

#[derive(Debug)]
pub struct FullReport {
    pub simulate: SimulateReport,
    pub metrics: Vec<MetricReport>,
    pub sweep: Option<Vec<SweepRow>>,
}

/// Hub-height and reference-height model winds at one park for one
/// interpolation method.
#[derive(Debug, Clone)]
struct ParkWinds {
    w10: HourlySeries,
    w50: HourlySeries,
    hub: HourlySeries,
    negative_hours: usize,
    shear_fallback_hours: usize,
}

struct StationPrep {
    /// Cleaned series of qualified stations only.
    cleaned: BTreeMap<String, StationSeries>,
    usable: BTreeMap<String, MonthMask>,
    locations: BTreeMap<String, GridPoint>,
}

/// Inputs loaded once per process; wind series are cached per
/// (park, interpolation) so the distance sweep does not recompute them.
pub struct SimContext {
    config: Config,
    grid: WindGrid,
    window: Vec<DateTime<Utc>>,
    t_offset: usize,
    parks: Vec<WindPark>,
    excluded: Vec<(String, String)>,
    raster: Option<MeanWindRaster>,
    stations: Option<StationPrep>,
    capacity_by_grouping: Vec<(Grouping, BTreeMap<String, CapacitySeries>)>,
    capacity_factors: BTreeMap<String, f64>,
    winds: BTreeMap<(String, &'static str), ParkWinds>,
}

/// Which region selector a reference label names, given this fleet.
/// Ambiguity resolves country first, then park id, state, subsystem.
fn region_filter_for(label: &str, parks: &[WindPark]) -> Option<RegionFilter> {
    if label == COUNTRY_LABEL {
        return Some(RegionFilter::Country);
    }
    if parks.iter().any(|p| p.park_id == label) {
        return Some(RegionFilter::Park(label.to_string()));
    }
    if parks.iter().any(|p| p.state == label) {
        return Some(RegionFilter::State(label.to_string()));
    }
    Subsystem::parse(label).ok().map(RegionFilter::Subsystem)
}

/// Capacity correction factor for a park: its state's if the reference
/// provides one, else its subsystem's, else the country's, else 1.
fn cf_for_park(factors: &BTreeMap<String, f64>, park: &WindPark) -> f64 {
    factors
        .get(&park.state)
        .or_else(|| factors.get(park.subsystem.name()))
        .or_else(|| factors.get(COUNTRY_LABEL))
        .copied()
        .unwrap_or(1.0)
}

/// Merge per-level region maps, rejecting a label that shows up twice.
fn merge_regions<T>(
    maps: Vec<BTreeMap<String, T>>,
) -> Result<BTreeMap<String, T>, PipelineError> {
    let mut out = BTreeMap::new();
    for map in maps {
        for (label, v) in map {
            if out.insert(label.clone(), v).is_some() {
                return Err(PipelineError::AmbiguousRegion(label));
            }
        }
    }
    Ok(out)
}

fn method_tag(interp: InterpMethod, correction: CorrectionMethod) -> String {
    format!("{}-{}", interp.name(), correction.name())
}

/// Quantize to the emitted 6-significant-digit precision, so metrics
/// computed in memory match metrics computed from written files.
fn round6(x: f64) -> f64 {
    io::fmt_sig6(x).parse().expect("fmt_sig6 emits plain decimals")
}

impl SimContext {
    pub fn load(config: &Config) -> Result<Self, PipelineError> {
        let grid = io::read_grid(required(&config.inputs.grid, "io.grid")?)?;
        if config.methods.vertical.needs_2m() && !grid.has_2m() {
            return Err(PipelineError::MissingLowLevel(config.methods.vertical.name()));
        }
        let times = grid.times();
        let first = times[0].date_naive();
        let last = times[times.len() - 1].date_naive();
        let start = config.run.start.unwrap_or(first);
        let end = config.run.end.unwrap_or(last);
        let in_window = |t: &DateTime<Utc>| {
            let d = t.date_naive();
            d >= start && d <= end
        };
        let t_offset = match times.iter().position(in_window) {
            Some(i) => i,
            None => return Err(PipelineError::EmptyWindow(start, end)),
        };
        let window: Vec<DateTime<Utc>> = times[t_offset..]
            .iter()
            .take_while(|t| in_window(t))
            .copied()
            .collect();

        let records = io::read_parks(required(&config.inputs.parks, "io.parks")?)?;
        let hub_model = match config.turbine.hub_model {
            HubModelSource::None => None,
            HubModelSource::Fit => {
                let pairs =
                    io::read_hub_training(required(&config.inputs.hub_training, "io.hub_training")?)?;
                Some(fit_hub_height_model(&pairs, config.turbine.hub_floor_m)?)
            }
            HubModelSource::Coeffs { intercept, slope } => Some(HubHeightModel {
                intercept,
                slope,
                floor_m: config.turbine.hub_floor_m,
            }),
        };
        let registry = build_registry(&records, hub_model.as_ref())?;
        if registry.parks.is_empty() {
            return Err(PipelineError::NoParks);
        }
        let parks = registry.parks;

        let raster = match &config.inputs.raster {
            Some(p) => Some(io::read_raster(p)?),
            None => None,
        };

        let needs_stations = config.methods.biascorr.iter().any(|m| {
            matches!(m, CorrectionMethod::MeanStation | CorrectionMethod::HmStation)
        });
        let stations = if needs_stations {
            let locations =
                io::read_stations(required(&config.inputs.stations, "io.stations")?)?;
            let measurements = io::read_measurements(
                required(&config.inputs.measurements, "io.measurements")?,
                &locations,
            )?;
            let rules = QualificationRules::default();
            let mut cleaned = BTreeMap::new();
            let mut usable = BTreeMap::new();
            let mut qualified_locs = BTreeMap::new();
            for (id, series) in measurements {
                let c = clean_constant_runs(&series, config.biascorr.min_run_hours);
                let q = qualify_station(&c, &rules);
                if q.qualified {
                    qualified_locs.insert(id.clone(), *c.location());
                    usable.insert(id.clone(), q.usable_months);
                    cleaned.insert(id, c);
                } else {
                    log::info!("station {id}: not qualified, ignored");
                }
            }
            Some(StationPrep {
                cleaned,
                usable,
                locations: qualified_locs,
            })
        } else {
            None
        };

        let win_first = window[0].date_naive();
        let win_last = window[window.len() - 1].date_naive();
        let mut capacity_by_grouping = Vec::new();
        for grouping in Grouping::ALL {
            let filters: Vec<RegionFilter> = match grouping {
                Grouping::Park => parks
                    .iter()
                    .map(|p| RegionFilter::Park(p.park_id.clone()))
                    .collect(),
                Grouping::State => {
                    let states: std::collections::BTreeSet<String> =
                        parks.iter().map(|p| p.state.clone()).collect();
                    states.into_iter().map(RegionFilter::State).collect()
                }
                Grouping::Subsystem => {
                    let subs: std::collections::BTreeSet<&str> = parks
                        .iter()
                        .filter(|p| p.subsystem != Subsystem::North)
                        .map(|p| p.subsystem.name())
                        .collect();
                    subs.into_iter()
                        .map(|s| RegionFilter::Subsystem(Subsystem::parse(s).expect("own name")))
                        .collect()
                }
                Grouping::Country => vec![RegionFilter::Country],
            };
            let mut map = BTreeMap::new();
            for f in filters {
                let series = capacity_timeseries(&parks, &f, win_first, win_last)?;
                map.insert(series.region().to_string(), series);
            }
            capacity_by_grouping.push((grouping, map));
        }

        let mut capacity_factors = BTreeMap::new();
        if let Some(p) = &config.inputs.reference_capacity {
            for (label, reference) in io::read_reference_capacity(p)? {
                let Some(filter) = region_filter_for(&label, &parks) else {
                    log::warn!("reference capacity region `{label}` matches no fleet region");
                    continue;
                };
                let model = capacity_timeseries(&parks, &filter, win_first, win_last)?;
                capacity_factors.insert(label, capacity_correction_factor(&reference, &model)?);
            }
        }

        Ok(Self {
            config: config.clone(),
            grid,
            window,
            t_offset,
            parks,
            excluded: registry.excluded,
            raster,
            stations,
            capacity_by_grouping,
            capacity_factors,
            winds: BTreeMap::new(),
        })
    }

    pub fn window_dates(&self) -> (NaiveDate, NaiveDate) {
        (
            self.window[0].date_naive(),
            self.window[self.window.len() - 1].date_naive(),
        )
    }

    fn winds_for(
        &mut self,
        park_id: &str,
        location: GridPoint,
        hub_height_m: f64,
        interp: InterpMethod,
    ) -> Result<ParkWinds, PipelineError> {
        let key = (park_id.to_string(), interp.name());
        if let Some(w) = self.winds.get(&key) {
            return Ok(w.clone());
        }
        let stencil = Stencil::build(self.grid.geometry(), &location, interp)?;
        // Displacement is static; bicubic overshoot below zero is clamped.
        let disp = stencil.apply(self.grid.disph_field().values()).max(0.0);
        let want_2m = self.grid.has_2m() && self.config.methods.vertical.needs_2m();
        let n = self.window.len();
        let mut w10 = Vec::with_capacity(n);
        let mut w50 = Vec::with_capacity(n);
        let mut hub = Vec::with_capacity(n);
        let mut negative_hours = 0;
        let mut shear_fallback_hours = 0;
        for h in 0..n {
            let ti = self.t_offset + h;
            let sample = |var| stencil.apply(self.grid.field(var, ti).values());
            let s10 = effective_speed(sample(WindVar::U10), sample(WindVar::V10));
            let s50 = effective_speed(sample(WindVar::U50), sample(WindVar::V50));
            let w2 = want_2m.then(|| effective_speed(sample(WindVar::U2), sample(WindVar::V2)));
            let wind = hub_speed(
                &LevelSpeeds {
                    w2,
                    w10: s10,
                    w50: s50,
                    disp,
                },
                hub_height_m,
                self.config.methods.vertical,
                self.config.methods.fallback_alpha,
            );
            if wind.negative {
                negative_hours += 1;
            }
            if wind.fell_back {
                shear_fallback_hours += 1;
            }
            w10.push(s10);
            w50.push(s50);
            hub.push(wind.speed);
        }
        let t0 = self.window[0];
        let winds = ParkWinds {
            w10: HourlySeries::new(t0, w10),
            w50: HourlySeries::new(t0, w50),
            hub: HourlySeries::new(t0, hub),
            negative_hours,
            shear_fallback_hours,
        };
        self.winds.insert(key, winds.clone());
        Ok(winds)
    }

    /// The configured no-station fallback, from the already computed
    /// winds. Returns the corrected hub series and the effective method.
    fn fallback_series(
        &self,
        park: &WindPark,
        winds: &ParkWinds,
    ) -> Result<(HourlySeries, CorrectionMethod), PipelineError> {
        match self.config.biascorr.fallback {
            CorrectionMethod::MeanGwa => {
                let raster = self.raster.as_ref().ok_or(PipelineError::MissingInput("io.raster"))?;
                let reference = raster_lookup(raster, &park.location, HeightTag::M50)?;
                let factor = gwa_factor(reference, &winds.w50)?;
                Ok((
                    apply_mean_correction(&winds.hub, factor, CorrectionMethod::MeanGwa).series,
                    CorrectionMethod::MeanGwa,
                ))
            }
            _ => Ok((winds.hub.clone(), CorrectionMethod::None)),
        }
    }

    /// Correct one park's hub series with the requested method, degrading
    /// per the configured fallback when the method cannot apply.
    fn corrected_hub(
        &mut self,
        park_idx: usize,
        interp: InterpMethod,
        correction: CorrectionMethod,
        max_station_km: f64,
    ) -> Result<(HourlySeries, ParkCorrection), PipelineError> {
        let park = self.parks[park_idx].clone();
        let winds = self.winds_for(&park.park_id, park.location, park.turbine.hub_height_m, interp)?;
        let mut outcome = ParkCorrection {
            park_id: park.park_id.clone(),
            requested: correction,
            effective: CorrectionMethod::None,
            station: None,
            fallback: None,
            negative_hours: winds.negative_hours,
            shear_fallback_hours: winds.shear_fallback_hours,
        };

        let fall_back = |this: &Self,
                         outcome: &mut ParkCorrection,
                         reason: FallbackReason|
         -> Result<HourlySeries, PipelineError> {
            log::warn!(
                "park {}: {} correction degraded ({})",
                park.park_id,
                correction,
                reason.name()
            );
            outcome.fallback = Some(reason);
            let (series, effective) = this.fallback_series(&park, &winds)?;
            outcome.effective = effective;
            Ok(series)
        };

        let series = match correction {
            CorrectionMethod::None => winds.hub.clone(),
            CorrectionMethod::MeanGwa => {
                let raster = self.raster.as_ref().ok_or(PipelineError::MissingInput("io.raster"))?;
                let reference = raster_lookup(raster, &park.location, HeightTag::M50)?;
                match gwa_factor(reference, &winds.w50) {
                    Ok(factor) => {
                        outcome.effective = CorrectionMethod::MeanGwa;
                        apply_mean_correction(&winds.hub, factor, CorrectionMethod::MeanGwa).series
                    }
                    Err(_) => {
                        // The raster path has no station to retreat to;
                        // a degenerate factor leaves the park uncorrected.
                        log::warn!(
                            "park {}: mean_gwa factor degenerate, left uncorrected",
                            park.park_id
                        );
                        outcome.fallback = Some(FallbackReason::DegenerateFactor);
                        winds.hub.clone()
                    }
                }
            }
            CorrectionMethod::MeanStation | CorrectionMethod::HmStation => {
                let prep = self
                    .stations
                    .as_ref()
                    .ok_or(PipelineError::MissingInput("io.stations"))?;
                match match_station(&park.location, &prep.locations, max_station_km) {
                    None => fall_back(self, &mut outcome, FallbackReason::NoStation)?,
                    Some((sid, km)) => {
                        outcome.station = Some((sid.clone(), km));
                        let station = &prep.cleaned[&sid];
                        let usable = &prep.usable[&sid];
                        let binning = HmBinning {
                            hour_offset: self.config.biascorr.hour_offset,
                        };
                        // The binned path first, demoting to the plain
                        // mean when its gate fails.
                        let mut demotion: Option<FallbackReason> = None;
                        let mut done: Option<HourlySeries> = None;
                        if correction == CorrectionMethod::HmStation {
                            let factors = hm_factors(station, usable, &winds.w10, &binning);
                            let check =
                                apply_hm_correction(&winds.w10, &factors, &binning).series;
                            match correction_gate(
                                station,
                                usable,
                                &check,
                                self.config.biascorr.min_correlation,
                            ) {
                                GateOutcome::Passed(_) => {
                                    outcome.effective = CorrectionMethod::HmStation;
                                    done = Some(
                                        apply_hm_correction(&winds.hub, &factors, &binning).series,
                                    );
                                }
                                GateOutcome::BelowThreshold(_) | GateOutcome::Undefined => {
                                    demotion = Some(FallbackReason::LowCorrelation);
                                }
                                GateOutcome::TooFewPairs => {
                                    demotion = Some(FallbackReason::InsufficientPairs);
                                }
                            }
                        }
                        match done {
                            Some(series) => series,
                            None if demotion == Some(FallbackReason::InsufficientPairs) => {
                                // No pairs: the mean would be degenerate too.
                                fall_back(self, &mut outcome, FallbackReason::InsufficientPairs)?
                            }
                            None => {
                                let factor = paired_means(station, usable, &winds.w10)
                                    .ok_or(())
                                    .and_then(|pm| {
                                        mean_factor(pm.ref_mean, pm.model_mean).map_err(|_| ())
                                    });
                                match factor {
                                    Ok(f) => {
                                        outcome.effective = CorrectionMethod::MeanStation;
                                        outcome.fallback = demotion;
                                        if let Some(reason) = demotion {
                                            log::warn!(
                                                "park {}: binned correction demoted to mean ({})",
                                                park.park_id,
                                                reason.name()
                                            );
                                        }
                                        apply_mean_correction(
                                            &winds.hub,
                                            f,
                                            CorrectionMethod::MeanStation,
                                        )
                                        .series
                                    }
                                    Err(()) => {
                                        let reason = match paired_means(station, usable, &winds.w10)
                                        {
                                            None => FallbackReason::InsufficientPairs,
                                            Some(_) => FallbackReason::DegenerateFactor,
                                        };
                                        fall_back(self, &mut outcome, reason)?
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };
        Ok((series, outcome))
    }

    /// Simulate every park under one (interpolation, correction) pair.
    pub fn run_method(
        &mut self,
        interp: InterpMethod,
        correction: CorrectionMethod,
        max_station_km: f64,
    ) -> Result<(BTreeMap<String, GenerationSeries>, MethodRun), PipelineError> {
        let mut park_series = BTreeMap::new();
        let mut outcomes = Vec::new();
        for idx in 0..self.parks.len() {
            let (hub, outcome) = self.corrected_hub(idx, interp, correction, max_station_km)?;
            let park = &self.parks[idx];
            let curve = build_power_curve(
                park.turbine.specific_power_wm2,
                self.config.turbine.cut_in,
                self.config.turbine.cut_out,
                self.config.turbine.air_density,
                self.config.turbine.cp,
            )?;
            let cf = cf_for_park(&self.capacity_factors, park);
            let power = hub.map(|t, v| {
                if t.date_naive() < park.commissioning {
                    0.0
                } else {
                    curve.capacity_factor(v) * park.capacity_mw * cf
                }
            });
            let series = daily_energy_series(&park.park_id, &power)?;
            park_series.insert(park.park_id.clone(), series);
            outcomes.push(outcome);
        }
        let run = MethodRun {
            tag: method_tag(interp, correction),
            interp,
            correction,
            parks: outcomes,
        };
        Ok((park_series, run))
    }

    fn write_capacity_files(&self, out_dir: &Path) -> Result<(), IoError> {
        for (grouping, map) in &self.capacity_by_grouping {
            let path = out_dir.join(format!("capacity_{}.csv", grouping.name()));
            io::write_capacity(&path, map, Precision::Sig6)?;
        }
        Ok(())
    }

    fn write_manifest(&self, report: &SimulateReport) -> Result<(), IoError> {
        let path = self.config.run.out_dir.join("manifest.txt");
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| IoError::Io {
                path: path.clone(),
                source: e,
            })?;
        }
        let mut w = BufWriter::new(File::create(&path).map_err(|e| IoError::Io {
            path: path.clone(),
            source: e,
        })?);
        let werr = |e| IoError::Io {
            path: path.clone(),
            source: e,
        };
        let (first, last) = self.window_dates();
        writeln!(w, "config_hash = {}", self.config.hash).map_err(werr)?;
        writeln!(w, "window = {first}..{last}").map_err(werr)?;
        writeln!(w, "vertical_method = {}", self.config.methods.vertical.name()).map_err(werr)?;
        writeln!(w, "parks_included = {}", self.parks.len()).map_err(werr)?;
        writeln!(w, "parks_excluded = {}", report.excluded.len()).map_err(werr)?;
        for (id, reason) in &report.excluded {
            writeln!(w, "excluded_park {id}: {reason}").map_err(werr)?;
        }
        for (region, cf) in &report.capacity_factors {
            writeln!(w, "capacity_factor {region} = {}", io::fmt_sig6(*cf)).map_err(werr)?;
        }
        writeln!(
            w,
            "degraded_fraction = {}",
            io::fmt_sig6(report.degraded_fraction)
        )
        .map_err(werr)?;
        for run in &report.methods {
            writeln!(
                w,
                "method {}: corrected={} fallbacks={}",
                run.tag,
                run.corrected(),
                run.degraded()
            )
            .map_err(werr)?;
            for p in &run.parks {
                let station = match &p.station {
                    Some((id, km)) => format!("{id}@{}km", io::fmt_sig6(*km)),
                    None => "-".to_string(),
                };
                let fallback = p.fallback.map_or("-", |r| r.name());
                writeln!(
                    w,
                    "park {} {}: requested={} effective={} station={} fallback={} \
                     negative_hours={} shear_fallback_hours={}",
                    run.tag,
                    p.park_id,
                    p.requested,
                    p.effective,
                    station,
                    fallback,
                    p.negative_hours,
                    p.shear_fallback_hours
                )
                .map_err(werr)?;
            }
        }
        Ok(())
    }
}

/// Generate the synthetic bundle and write it to the configured input
/// paths.
pub fn run_synthetic(config: &Config) -> Result<(), PipelineError> {
    let bundle = synthetic::generate(&config.synthetic, &config.turbine)?;
    synthetic::write_bundle(&bundle, &config.inputs)?;
    Ok(())
}

/// Simulate all configured method combinations and write the generation,
/// capacity, and manifest files.
pub fn run_simulate(config: &Config) -> Result<SimulateReport, PipelineError> {
    let mut ctx = SimContext::load(config)?;
    let out_dir = config.run.out_dir.clone();
    let mut methods = Vec::new();
    for interp in config.methods.interp.clone() {
        for correction in config.methods.biascorr.clone() {
            let (park_series, run) =
                ctx.run_method(interp, correction, config.biascorr.max_station_km)?;
            let tag_dir = out_dir.join("sim").join(&run.tag);
            for grouping in Grouping::ALL {
                let aggregated = aggregate_generation(&ctx.parks, &park_series, grouping)?;
                let path = tag_dir.join(format!("generation_{}.csv", grouping.name()));
                io::write_generation(&path, &aggregated, Precision::Sig6)?;
            }
            methods.push(run);
        }
    }
    ctx.write_capacity_files(&out_dir)?;

    let correctable: usize = methods
        .iter()
        .filter(|m| m.correction != CorrectionMethod::None)
        .count()
        * ctx.parks.len();
    let degraded: usize = methods.iter().map(|m| m.degraded()).sum();
    let degraded_fraction = if correctable == 0 {
        0.0
    } else {
        degraded as f64 / correctable as f64
    };
    let report = SimulateReport {
        methods,
        excluded: ctx.excluded.clone(),
        capacity_factors: ctx.capacity_factors.clone(),
        degraded_fraction,
        degraded_beyond_tolerance: degraded_fraction > config.run.max_degraded_fraction,
    };
    ctx.write_manifest(&report)?;
    Ok(report)
}

fn read_generation_levels(
    dir: &Path,
) -> Result<BTreeMap<String, GenerationSeries>, PipelineError> {
    let mut maps = Vec::new();
    for grouping in Grouping::ALL {
        let path = dir.join(format!("generation_{}.csv", grouping.name()));
        maps.push(io::read_observed(&path)?);
    }
    merge_regions(maps)
}

fn read_capacity_levels(
    out_dir: &Path,
) -> Result<BTreeMap<String, CapacitySeries>, PipelineError> {
    let mut maps = Vec::new();
    for grouping in Grouping::ALL {
        let path = out_dir.join(format!("capacity_{}.csv", grouping.name()));
        maps.push(io::read_reference_capacity(&path)?);
    }
    merge_regions(maps)
}

/// Compare each simulated method run against the observed generation and
/// write the metrics table.
pub fn run_validate(config: &Config) -> Result<Vec<MetricReport>, PipelineError> {
    let observed = io::read_observed(required(&config.inputs.observed, "io.observed")?)?;
    let out_dir = &config.run.out_dir;
    let capacity = read_capacity_levels(out_dir)?;
    let mut reports = Vec::new();
    for interp in &config.methods.interp {
        for correction in &config.methods.biascorr {
            let tag = method_tag(*interp, *correction);
            let sim = read_generation_levels(&out_dir.join("sim").join(&tag))?;
            reports.extend(evaluate(&sim, &observed, &capacity, &tag)?);
        }
    }
    io::write_metrics(&out_dir.join("metrics.csv"), &reports)?;
    Ok(reports)
}

/// Repeat the station-mean pipeline per distance limit, reporting the
/// country-level metrics and the corrected-park count for each.
pub fn run_sweep_distance(config: &Config) -> Result<Vec<SweepRow>, PipelineError> {
    let mut sweep_config = config.clone();
    if !sweep_config
        .methods
        .biascorr
        .contains(&CorrectionMethod::MeanStation)
    {
        sweep_config.methods.biascorr = vec![CorrectionMethod::MeanStation];
    }
    let observed_all =
        io::read_observed(required(&config.inputs.observed, "io.observed")?)?;
    let observed_country = observed_all
        .get(COUNTRY_LABEL)
        .ok_or_else(|| PipelineError::MissingObserved(COUNTRY_LABEL.to_string()))?
        .clone();
    let mut obs = BTreeMap::new();
    obs.insert(COUNTRY_LABEL.to_string(), observed_country);

    let mut ctx = SimContext::load(&sweep_config)?;
    let interp = sweep_config.methods.interp[0];
    let capacity: BTreeMap<String, CapacitySeries> = ctx
        .capacity_by_grouping
        .iter()
        .find(|(g, _)| *g == Grouping::Country)
        .expect("country grouping always present")
        .1
        .iter()
        .map(|(label, s)| {
            let vals = s.values().iter().copied().map(round6).collect();
            let rounded = CapacitySeries::new(label.clone(), s.dates().to_vec(), vals)
                .expect("rounding keeps the series valid");
            (label.clone(), rounded)
        })
        .collect();

    let mut rows = Vec::new();
    for km in sweep_config.sweep.km_list.clone() {
        let (park_series, run) = ctx.run_method(interp, CorrectionMethod::MeanStation, km)?;
        let country = aggregate_generation(&ctx.parks, &park_series, Grouping::Country)?
            .into_iter()
            .map(|(label, s)| {
                let vals = s.values().iter().copied().map(round6).collect();
                let rounded = GenerationSeries::new(label.clone(), s.dates().to_vec(), vals)
                    .expect("rounding keeps the series valid");
                (label, rounded)
            })
            .collect();
        let mut report = evaluate(&country, &obs, &capacity, &run.tag)?;
        debug_assert_eq!(report.len(), 1);
        rows.push(SweepRow {
            max_km: km,
            corrected_parks: run
                .parks
                .iter()
                .filter(|p| {
                    matches!(
                        p.effective,
                        CorrectionMethod::MeanStation | CorrectionMethod::HmStation
                    )
                })
                .count(),
            report: report.remove(0),
        });
    }
    io::write_sweep(&config.run.out_dir.join("sweep_distance.csv"), &rows)?;
    Ok(rows)
}

/// All stages in order: synthetic generation when enabled, simulation,
/// validation when observations are configured, and the distance sweep
/// when enabled.
pub fn run_full(config: &Config) -> Result<FullReport, PipelineError> {
    if config.synthetic.enabled {
        run_synthetic(config)?;
    }
    let simulate = run_simulate(config)?;
    let metrics = if config.inputs.observed.is_some() {
        run_validate(config)?
    } else {
        Vec::new()
    };
    let sweep = if config.sweep.enabled && config.inputs.stations.is_some() {
        Some(run_sweep_distance(config)?)
    } else {
        None
    };
    Ok(FullReport {
        simulate,
        metrics,
        sweep,
    })
}
