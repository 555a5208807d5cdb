//! Wind-speed bias correction against point measurements and a mean-wind
//! raster: measurement cleaning and qualification, station matching, mean
//! and hourly-by-monthly correction factors, and the correlation gate that
//! decides whether the binned correction may be applied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use thiserror::Error;

use crate::grid::{haversine_km, GridPoint};
use crate::stats;
use crate::timeseries::HourlySeries;

pub const DEFAULT_MIN_RUN_HOURS: usize = 120;
pub const DEFAULT_MAX_STATION_KM: f64 = 40.0;
pub const DEFAULT_MIN_CORRELATION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BiasCorrError {
    #[error("station `{0}`: negative or non-finite speed {1}")]
    BadSpeed(String, f64),
    #[error("station `{0}`: start must be on the hour")]
    OffHourStart(String),
    #[error("model mean is zero; correction factor undefined")]
    ZeroModelMean,
    #[error("reference mean {0} is negative")]
    NegativeReference(f64),
    #[error("no paired samples between reference and model")]
    NoPairs,
}

/// Hourly 10 m wind measurements at a fixed station.
///
/// Stored densely from `start`: index i holds the hour `start + i`, with
/// `None` marking missing measurements.
#[derive(Debug, Clone)]
pub struct StationSeries {
    station_id: String,
    location: GridPoint,
    start: DateTime<Utc>,
    speeds: Vec<Option<f64>>,
}

impl StationSeries {
    pub fn new(
        station_id: String,
        location: GridPoint,
        start: DateTime<Utc>,
        speeds: Vec<Option<f64>>,
    ) -> Result<Self, BiasCorrError> {
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(BiasCorrError::OffHourStart(station_id));
        }
        for v in speeds.iter().flatten() {
            if !v.is_finite() || *v < 0.0 {
                return Err(BiasCorrError::BadSpeed(station_id, *v));
            }
        }
        Ok(Self {
            station_id,
            location,
            start,
            speeds,
        })
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn location(&self) -> &GridPoint {
        &self.location
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn speeds(&self) -> &[Option<f64>] {
        &self.speeds
    }

    pub fn time_at(&self, idx: usize) -> DateTime<Utc> {
        debug_assert!(idx < self.speeds.len());
        self.start + Duration::hours(idx as i64)
    }

    pub fn present_count(&self) -> usize {
        self.speeds.iter().flatten().count()
    }
}

/// Drop maximal runs of repeated values that last at least `min_run_hours`.
///
/// Stuck sensors report the same reading for days on end; a run is a
/// stretch of consecutive present hours whose values are bitwise equal.
/// Missing hours break runs. Idempotent.
pub fn clean_constant_runs(series: &StationSeries, min_run_hours: usize) -> StationSeries {
    let mut out = series.clone();
    let n = out.speeds.len();
    let mut i = 0;
    while i < n {
        let Some(v) = out.speeds[i] else {
            i += 1;
            continue;
        };
        let bits = v.to_bits();
        let mut j = i + 1;
        while j < n && out.speeds[j].map(f64::to_bits) == Some(bits) {
            j += 1;
        }
        if j - i >= min_run_hours {
            for slot in &mut out.speeds[i..j] {
                *slot = None;
            }
        }
        i = j;
    }
    out
}

/// Thresholds for station admission and per-month usability.
#[derive(Debug, Clone)]
pub struct QualificationRules {
    pub epoch_start_year: i32,
    pub min_years: usize,
    pub complete_month_hours: u32,
    pub usable_month_hours: u32,
}

impl Default for QualificationRules {
    fn default() -> Self {
        Self {
            epoch_start_year: 1999,
            min_years: 4,
            complete_month_hours: 720,
            usable_month_hours: 240,
        }
    }
}

/// Set of (year, month) combinations a station may contribute to.
pub type MonthMask = BTreeSet<(i32, u32)>;

#[derive(Debug, Clone)]
pub struct Qualification {
    pub qualified: bool,
    pub usable_months: MonthMask,
}

/// Decide whether a cleaned station series is usable at all, and which of
/// its (year, month) slices carry enough data.
///
/// Qualified means: for every calendar month except February, at least
/// `min_years` distinct years from `epoch_start_year` on reach
/// `complete_month_hours` present hours in that month. February is
/// exempt because it is too short to reach the threshold. Independently,
/// any (year, month) with at least `usable_month_hours` present hours is
/// marked usable.
pub fn qualify_station(series: &StationSeries, rules: &QualificationRules) -> Qualification {
    let mut counts: BTreeMap<(i32, u32), u32> = BTreeMap::new();
    for (i, v) in series.speeds.iter().enumerate() {
        if v.is_some() {
            let t = series.time_at(i);
            *counts.entry((t.year(), t.month())).or_insert(0) += 1;
        }
    }
    let usable_months: MonthMask = counts
        .iter()
        .filter(|(_, c)| **c >= rules.usable_month_hours)
        .map(|(k, _)| *k)
        .collect();
    let qualified = (1..=12u32).filter(|m| *m != 2).all(|m| {
        counts
            .iter()
            .filter(|((y, mm), c)| {
                *mm == m && *y >= rules.epoch_start_year && **c >= rules.complete_month_hours
            })
            .count()
            >= rules.min_years
    });
    Qualification {
        qualified,
        usable_months,
    }
}

/// Nearest qualified station within `max_km` of a park.
///
/// Iteration runs in ascending station id with a strict distance
/// comparison, so equidistant stations resolve to the lower id.
pub fn match_station(
    location: &GridPoint,
    stations: &BTreeMap<String, GridPoint>,
    max_km: f64,
) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    for (id, loc) in stations {
        let d = haversine_km(location, loc);
        if d <= max_km && best.as_ref().is_none_or(|(_, bd)| d < *bd) {
            best = Some((id.clone(), d));
        }
    }
    best
}

/// Ratio of reference mean to model mean wind speed.
pub fn mean_factor(ref_mean: f64, model_mean: f64) -> Result<f64, BiasCorrError> {
    if ref_mean < 0.0 {
        return Err(BiasCorrError::NegativeReference(ref_mean));
    }
    if model_mean <= 0.0 {
        return Err(BiasCorrError::ZeroModelMean);
    }
    Ok(ref_mean / model_mean)
}

/// Correction factor from a mean-wind raster value: the raster speed over
/// the mean of the model 50 m series across the full window.
pub fn gwa_factor(raster_speed: f64, model_w50: &HourlySeries) -> Result<f64, BiasCorrError> {
    if model_w50.is_empty() {
        return Err(BiasCorrError::NoPairs);
    }
    mean_factor(raster_speed, stats::mean(model_w50.values()))
}

/// All (station, model) sample pairs at hours where the station reports a
/// value, the hour falls in a usable (year, month), and the model series
/// covers the timestamp.
pub fn paired_samples(
    reference: &StationSeries,
    usable: &MonthMask,
    model: &HourlySeries,
) -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    for (i, v) in reference.speeds.iter().enumerate() {
        let Some(r) = v else { continue };
        let t = reference.time_at(i);
        if !usable.contains(&(t.year(), t.month())) {
            continue;
        }
        if let Some(j) = model.index_of(t) {
            pairs.push((*r, model.values()[j]));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy)]
pub struct PairedMeans {
    pub ref_mean: f64,
    pub model_mean: f64,
    pub n: usize,
}

/// Means of the paired samples; `None` when nothing pairs up.
pub fn paired_means(
    reference: &StationSeries,
    usable: &MonthMask,
    model: &HourlySeries,
) -> Option<PairedMeans> {
    let pairs = paired_samples(reference, usable, model);
    if pairs.is_empty() {
        return None;
    }
    let refs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let models: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Some(PairedMeans {
        ref_mean: stats::mean(&refs),
        model_mean: stats::mean(&models),
        n: pairs.len(),
    })
}

/// How timestamps map to (hour-of-day, month) bins.
///
/// Binning is done in UTC; `hour_offset` shifts timestamps beforehand so
/// bins can follow local time instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct HmBinning {
    pub hour_offset: i64,
}

impl HmBinning {
    /// (hour 0-23, month 1-12) of a timestamp under this binning.
    pub fn bin(&self, t: DateTime<Utc>) -> (u32, u32) {
        let shifted = t + Duration::hours(self.hour_offset);
        (shifted.hour(), shifted.month())
    }
}

/// 24 x 12 table of correction factors indexed by (hour-of-day, month).
#[derive(Debug, Clone, PartialEq)]
pub struct HmFactors {
    factors: [[f64; 12]; 24],
    covered: [[bool; 12]; 24],
}

impl HmFactors {
    /// All factors 1, nothing covered.
    pub fn identity() -> Self {
        Self {
            factors: [[1.0; 12]; 24],
            covered: [[false; 12]; 24],
        }
    }

    pub fn factor_at(&self, hour: u32, month: u32) -> f64 {
        assert!(hour < 24 && (1..=12).contains(&month));
        self.factors[hour as usize][(month - 1) as usize]
    }

    pub fn is_covered(&self, hour: u32, month: u32) -> bool {
        assert!(hour < 24 && (1..=12).contains(&month));
        self.covered[hour as usize][(month - 1) as usize]
    }

    pub fn n_covered(&self) -> usize {
        self.covered.iter().flatten().filter(|c| **c).count()
    }

    fn set(&mut self, hour: u32, month: u32, factor: f64) {
        self.factors[hour as usize][(month - 1) as usize] = factor;
        self.covered[hour as usize][(month - 1) as usize] = true;
    }
}

/// Per-bin correction factors: the ratio of reference to model sums over
/// the paired hours falling in each (hour-of-day, month) bin.
///
/// Bins with no paired data or a zero model sum keep factor 1 and are
/// flagged uncovered, so sparse stations degrade toward no correction.
pub fn hm_factors(
    reference: &StationSeries,
    usable: &MonthMask,
    model: &HourlySeries,
    binning: &HmBinning,
) -> HmFactors {
    let mut ref_sum = [[0.0f64; 12]; 24];
    let mut model_sum = [[0.0f64; 12]; 24];
    let mut count = [[0u32; 12]; 24];
    for (i, v) in reference.speeds.iter().enumerate() {
        let Some(r) = v else { continue };
        let t = reference.time_at(i);
        if !usable.contains(&(t.year(), t.month())) {
            continue;
        }
        let Some(j) = model.index_of(t) else { continue };
        let (h, m) = binning.bin(t);
        ref_sum[h as usize][(m - 1) as usize] += r;
        model_sum[h as usize][(m - 1) as usize] += model.values()[j];
        count[h as usize][(m - 1) as usize] += 1;
    }
    let mut out = HmFactors::identity();
    for h in 0..24u32 {
        for m in 1..=12u32 {
            let (hi, mi) = (h as usize, (m - 1) as usize);
            if count[hi][mi] == 0 || model_sum[hi][mi] == 0.0 {
                continue;
            }
            let f = ref_sum[hi][mi] / model_sum[hi][mi];
            if f == 0.0 {
                // A station that reports calm for every paired hour of a
                // bin zeroes that bin of the corrected series.
                log::debug!(
                    "station {}: all-zero reference in bin (hour {}, month {})",
                    reference.station_id,
                    h,
                    m
                );
            }
            out.set(h, m, f);
        }
    }
    out
}

/// Which correction was applied to a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CorrectionMethod {
    None,
    MeanGwa,
    MeanStation,
    HmStation,
}

impl CorrectionMethod {
    pub const ALL: [CorrectionMethod; 4] = [
        CorrectionMethod::None,
        CorrectionMethod::MeanGwa,
        CorrectionMethod::MeanStation,
        CorrectionMethod::HmStation,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(CorrectionMethod::None),
            "mean_gwa" => Some(CorrectionMethod::MeanGwa),
            "mean_station" => Some(CorrectionMethod::MeanStation),
            "hm_station" => Some(CorrectionMethod::HmStation),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorrectionMethod::None => "none",
            CorrectionMethod::MeanGwa => "mean_gwa",
            CorrectionMethod::MeanStation => "mean_station",
            CorrectionMethod::HmStation => "hm_station",
        }
    }
}

impl fmt::Display for CorrectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An hourly wind series with the correction that produced it.
#[derive(Debug, Clone)]
pub struct CorrectedSeries {
    pub series: HourlySeries,
    pub method: CorrectionMethod,
}

/// Multiply every hour by one scalar factor.
pub fn apply_mean_correction(
    hub: &HourlySeries,
    factor: f64,
    method: CorrectionMethod,
) -> CorrectedSeries {
    debug_assert!(factor >= 0.0 && factor.is_finite());
    CorrectedSeries {
        series: hub.scaled(factor),
        method,
    }
}

/// Multiply every hour by the factor of its (hour-of-day, month) bin.
pub fn apply_hm_correction(
    hub: &HourlySeries,
    factors: &HmFactors,
    binning: &HmBinning,
) -> CorrectedSeries {
    let series = hub.map(|t, v| {
        let (h, m) = binning.bin(t);
        v * factors.factor_at(h, m)
    });
    CorrectedSeries {
        series,
        method: CorrectionMethod::HmStation,
    }
}

/// Outcome of the correlation gate on a corrected series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOutcome {
    /// Correlation at or above the threshold: binned correction stands.
    Passed(f64),
    /// Correlation defined but too low.
    BelowThreshold(f64),
    /// Zero variance on one side; correlation undefined.
    Undefined,
    /// Fewer than two paired samples.
    TooFewPairs,
}

impl GateOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, GateOutcome::Passed(_))
    }
}

/// Gate the binned correction on its agreement with the measurements.
///
/// Pearson correlation between station values and the corrected model at
/// the measurement height over paired usable hours; the threshold is
/// inclusive.
pub fn correction_gate(
    reference: &StationSeries,
    usable: &MonthMask,
    corrected_10m: &HourlySeries,
    min_correlation: f64,
) -> GateOutcome {
    let pairs = paired_samples(reference, usable, corrected_10m);
    if pairs.len() < 2 {
        return GateOutcome::TooFewPairs;
    }
    let refs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let models: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    match stats::pearson(&refs, &models) {
        None => GateOutcome::Undefined,
        Some(r) if r >= min_correlation => GateOutcome::Passed(r),
        Some(r) => GateOutcome::BelowThreshold(r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn utc(y: i32, mo: u32, d: u32, h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, mo, d, h, 0, 0).unwrap()
    }

    fn station(start: DateTime<Utc>, speeds: Vec<Option<f64>>) -> StationSeries {
        StationSeries::new(
            "st".into(),
            GridPoint::new(-10.0, -40.0).unwrap(),
            start,
            speeds,
        )
        .unwrap()
    }

    fn hours_in_month(y: i32, m: u32) -> usize {
        let next = if m == 12 { utc(y + 1, 1, 1, 0) } else { utc(y, m + 1, 1, 0) };
        (next - utc(y, m, 1, 0)).num_hours() as usize
    }

    /// Dense multi-year series with varied values everywhere.
    fn full_station(y0: i32, years: i32) -> StationSeries {
        let start = utc(y0, 1, 1, 0);
        let end = utc(y0 + years, 1, 1, 0);
        let n = (end - start).num_hours() as usize;
        let speeds = (0..n)
            .map(|i| Some(5.0 + (i as f64 * 0.7).sin().abs()))
            .collect();
        station(start, speeds)
    }

    #[test]
    fn constant_run_boundary() {
        // 119 repeats survive, 120 do not.
        for (run, kept) in [(119usize, true), (120usize, false)] {
            let mut speeds = vec![Some(1.0); 300];
            for (k, slot) in speeds.iter_mut().enumerate().skip(50).take(run) {
                *slot = Some(7.25);
                let _ = k;
            }
            let s = station(utc(2005, 1, 1, 0), speeds);
            let cleaned = clean_constant_runs(&s, 120);
            // The surrounding 1.0 stretch is short enough to survive.
            assert_eq!(cleaned.speeds()[60].is_some(), kept, "run {run}");
        }
    }

    #[test]
    fn missing_breaks_runs() {
        // Two 80-hour halves of the same value separated by one gap: no
        // 120-hour run exists.
        let mut speeds = vec![Some(3.0); 161];
        speeds[80] = None;
        let s = station(utc(2005, 1, 1, 0), speeds);
        let cleaned = clean_constant_runs(&s, 120);
        assert_eq!(cleaned.present_count(), 160);
        // Remove the gap: one 161-hour run, all dropped.
        let s2 = station(utc(2005, 1, 1, 0), vec![Some(3.0); 161]);
        assert_eq!(clean_constant_runs(&s2, 120).present_count(), 0);
    }

    #[test]
    fn cleaning_requires_exact_repeats_and_is_idempotent() {
        let mut speeds = vec![Some(2.0); 240];
        speeds[100] = Some(2.0 + f64::EPSILON * 2.0); // breaks the run
        let s = station(utc(2005, 1, 1, 0), speeds.clone());
        let once = clean_constant_runs(&s, 120);
        // 0..100 (len 100) kept, 101..240 (len 139) dropped, lone odd value kept.
        assert_eq!(once.present_count(), 101);
        let twice = clean_constant_runs(&once, 120);
        assert_eq!(once.speeds(), twice.speeds());

        let wiped = clean_constant_runs(&station(utc(2005, 1, 1, 0), vec![Some(0.0); 120]), 120);
        assert_eq!(wiped.present_count(), 0);
    }

    #[test]
    fn alternating_values_untouched() {
        let speeds: Vec<Option<f64>> = (0..400).map(|i| Some((i % 2) as f64)).collect();
        let s = station(utc(2005, 1, 1, 0), speeds.clone());
        assert_eq!(clean_constant_runs(&s, 120).speeds(), &speeds[..]);
    }

    #[test]
    fn qualification_saturating_case() {
        let s = full_station(2001, 5);
        let q = qualify_station(&s, &QualificationRules::default());
        assert!(q.qualified);
        // Every (year, month) of the five years is usable.
        assert_eq!(q.usable_months.len(), 60);
    }

    #[test]
    fn qualification_needs_four_years_per_month() {
        let rules = QualificationRules::default();
        // Four complete years: qualified. Three: not.
        assert!(qualify_station(&full_station(2001, 4), &rules).qualified);
        assert!(!qualify_station(&full_station(2001, 3), &rules).qualified);
    }

    #[test]
    fn qualification_ignores_pre_epoch_years() {
        let rules = QualificationRules::default();
        // Four complete years, but two fall before the epoch.
        let q = qualify_station(&full_station(1997, 4), &rules);
        assert!(!q.qualified);
        // The pre-epoch months still count as usable data slices.
        assert!(q.usable_months.contains(&(1997, 6)));
    }

    #[test]
    fn qualification_exempts_february() {
        // Knock out every February beyond 240 h: still qualified, and the
        // drained Februaries drop out of the usable mask.
        let s = full_station(2001, 4);
        let mut speeds = s.speeds().to_vec();
        for (i, slot) in speeds.iter_mut().enumerate() {
            let t = s.time_at(i);
            if t.month() == 2 && t.day() > 10 {
                *slot = None;
            }
        }
        let s = station(s.start(), speeds);
        let q = qualify_station(&s, &QualificationRules::default());
        assert!(q.qualified);
        assert!(q.usable_months.contains(&(2001, 2))); // 240 h remain
    }

    #[test]
    fn month_usability_boundary() {
        // One month at exactly 240 present hours is usable; at 239 it is not.
        for (present, usable) in [(240u32, true), (239u32, false)] {
            let s = full_station(2001, 4);
            let mut speeds = s.speeds().to_vec();
            let mut kept = 0;
            for (i, slot) in speeds.iter_mut().enumerate() {
                let t = s.time_at(i);
                if t.year() == 2002 && t.month() == 7 {
                    if kept < present {
                        kept += 1;
                    } else {
                        *slot = None;
                    }
                }
            }
            let s = station(s.start(), speeds);
            let q = qualify_station(&s, &QualificationRules::default());
            assert_eq!(q.usable_months.contains(&(2002, 7)), usable, "{present}");
        }
    }

    #[test]
    fn month_completeness_boundary_flips_qualification() {
        // Exactly four January candidates; drain one of them to 719 hours
        // and qualification must flip.
        for (jan_hours, qualified) in [(720u32, true), (719u32, false)] {
            let s = full_station(2001, 4);
            let mut speeds = s.speeds().to_vec();
            let mut kept = 0;
            for (i, slot) in speeds.iter_mut().enumerate() {
                let t = s.time_at(i);
                if t.year() == 2003 && t.month() == 1 {
                    if kept < jan_hours {
                        kept += 1;
                    } else {
                        *slot = None;
                    }
                }
            }
            let s = station(s.start(), speeds);
            let q = qualify_station(&s, &QualificationRules::default());
            assert_eq!(q.qualified, qualified, "{jan_hours}");
        }
    }

    #[test]
    fn station_matching_distance_and_ties() {
        let park = GridPoint::new(0.0, 0.0).unwrap();
        let mut stations = BTreeMap::new();
        stations.insert("far".to_string(), GridPoint::new(0.0, 0.5).unwrap());
        stations.insert("near".to_string(), GridPoint::new(0.0, 0.2).unwrap());
        let (id, d) = match_station(&park, &stations, 40.0).unwrap();
        assert_eq!(id, "near");
        assert!((d - haversine_km(&park, &stations["near"])).abs() < 1e-12);
        // Brute-force oracle agrees.
        let brute = stations
            .iter()
            .min_by(|a, b| {
                haversine_km(&park, a.1)
                    .partial_cmp(&haversine_km(&park, b.1))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(id, *brute.0);
        // Tighten the limit below the nearest distance: no match.
        assert!(match_station(&park, &stations, 20.0).is_none());
        // Equidistant stations resolve to the lower id.
        let mut tied = BTreeMap::new();
        tied.insert("b".to_string(), GridPoint::new(0.0, 0.1).unwrap());
        tied.insert("a".to_string(), GridPoint::new(0.0, -0.1).unwrap());
        assert_eq!(match_station(&park, &tied, 40.0).unwrap().0, "a");
    }

    #[test]
    fn matching_respects_limit_boundary() {
        let park = GridPoint::new(0.0, 0.0).unwrap();
        // 0.359 deg of longitude on the equator is ~39.9 km.
        let mut stations = BTreeMap::new();
        stations.insert("s".to_string(), GridPoint::new(0.0, 0.359).unwrap());
        let (_, d) = match_station(&park, &stations, 40.0).unwrap();
        assert!(d < 40.0 && d > 39.8);
        let mut outside = BTreeMap::new();
        outside.insert("s".to_string(), GridPoint::new(0.0, 0.3605).unwrap());
        assert!(match_station(&park, &outside, 40.0).is_none());
    }

    #[test]
    fn mean_factor_basics() {
        assert_eq!(mean_factor(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(mean_factor(8.0, 4.0).unwrap(), 2.0);
        assert!(matches!(
            mean_factor(5.0, 0.0),
            Err(BiasCorrError::ZeroModelMean)
        ));
        assert!(mean_factor(-1.0, 2.0).is_err());
    }

    /// Station with per-month gaps plus a model series over part of the
    /// window; used by the pairing tests.
    fn gappy_pair(seed: u64) -> (StationSeries, MonthMask, HourlySeries) {
        let mut rng = StdRng::seed_from_u64(seed);
        let s = full_station(2004, 3);
        let mut speeds = s.speeds().to_vec();
        for slot in speeds.iter_mut() {
            if rng.gen_bool(0.3) {
                *slot = None;
            }
        }
        let s = station(s.start(), speeds);
        let q = qualify_station(&s, &QualificationRules::default());
        let start = utc(2004, 6, 1, 0);
        let n = (utc(2006, 6, 1, 0) - start).num_hours() as usize;
        let values = (0..n).map(|i| 4.0 + (i as f64 * 0.31).cos().abs()).collect();
        let model = HourlySeries::new(start, values);
        (s, q.usable_months, model)
    }

    #[test]
    fn paired_means_match_direct_scan() {
        let (s, usable, model) = gappy_pair(7);
        let pm = paired_means(&s, &usable, &model).unwrap();
        // Oracle: walk the model hours instead of the station hours.
        let mut refs = Vec::new();
        let mut models = Vec::new();
        for (j, mv) in model.values().iter().enumerate() {
            let t = model.time_at(j);
            if !usable.contains(&(t.year(), t.month())) {
                continue;
            }
            let offset = (t - s.start()).num_hours();
            if offset < 0 || offset as usize >= s.len() {
                continue;
            }
            if let Some(r) = s.speeds()[offset as usize] {
                refs.push(r);
                models.push(*mv);
            }
        }
        assert_eq!(pm.n, refs.len());
        assert!((pm.ref_mean - stats::mean(&refs)).abs() < 1e-12);
        assert!((pm.model_mean - stats::mean(&models)).abs() < 1e-12);
        assert!(pm.n > 1000, "pairing collapsed: {}", pm.n);
    }

    #[test]
    fn mean_correction_fixed_point() {
        // Correcting the model by the paired-mean factor makes its paired
        // mean equal the reference mean.
        for seed in [1, 2, 3] {
            let (s, usable, model) = gappy_pair(seed);
            let pm = paired_means(&s, &usable, &model).unwrap();
            let f = mean_factor(pm.ref_mean, pm.model_mean).unwrap();
            let corrected = apply_mean_correction(&model, f, CorrectionMethod::MeanStation);
            let pm2 = paired_means(&s, &usable, &corrected.series).unwrap();
            assert_eq!(pm2.n, pm.n);
            assert!(
                (pm2.model_mean - pm.ref_mean).abs() / pm.ref_mean <= 1e-9,
                "{} vs {}",
                pm2.model_mean,
                pm.ref_mean
            );
        }
    }

    #[test]
    fn gwa_factor_full_window_mean() {
        let model = HourlySeries::new(utc(2006, 1, 1, 0), vec![2.0, 4.0, 6.0]);
        assert!((gwa_factor(6.0, &model).unwrap() - 1.5).abs() < 1e-15);
        let calm = HourlySeries::new(utc(2006, 1, 1, 0), vec![0.0; 3]);
        assert!(gwa_factor(6.0, &calm).is_err());
    }

    #[test]
    fn hm_factors_identity_and_scaling() {
        let (s, usable, _) = gappy_pair(11);
        // Model = exactly the station values over the station window.
        let values: Vec<f64> = s.speeds().iter().map(|v| v.unwrap_or(1.0)).collect();
        let model = HourlySeries::new(s.start(), values);
        let binning = HmBinning::default();
        let f = hm_factors(&s, &usable, &model, &binning);
        for h in 0..24 {
            for m in 1..=12 {
                if f.is_covered(h, m) {
                    assert!((f.factor_at(h, m) - 1.0).abs() < 1e-12);
                }
            }
        }
        // Station = 2 x model: every covered factor is exactly 2.
        let doubled = station(
            s.start(),
            s.speeds().iter().map(|v| v.map(|x| 2.0 * x)).collect(),
        );
        let f2 = hm_factors(&doubled, &usable, &model, &binning);
        for h in 0..24 {
            for m in 1..=12 {
                if f2.is_covered(h, m) {
                    assert!((f2.factor_at(h, m) - 2.0).abs() < 1e-12);
                }
            }
        }
        assert!(f2.n_covered() > 200, "coverage {}", f2.n_covered());
    }

    #[test]
    fn hm_factors_match_brute_force_binning() {
        let (s, usable, model) = gappy_pair(13);
        let binning = HmBinning { hour_offset: -3 };
        let got = hm_factors(&s, &usable, &model, &binning);
        // Independent accumulation keyed by a map instead of arrays.
        let mut sums: BTreeMap<(u32, u32), (f64, f64)> = BTreeMap::new();
        for (i, v) in s.speeds().iter().enumerate() {
            let Some(r) = v else { continue };
            let t = s.time_at(i);
            if !usable.contains(&(t.year(), t.month())) {
                continue;
            }
            let Some(j) = model.index_of(t) else { continue };
            let shifted = t + Duration::hours(-3);
            let e = sums.entry((shifted.hour(), shifted.month())).or_insert((0.0, 0.0));
            e.0 += r;
            e.1 += model.values()[j];
        }
        for h in 0..24 {
            for m in 1..=12 {
                match sums.get(&(h, m)) {
                    Some((rs, ms)) if *ms != 0.0 => {
                        assert!(got.is_covered(h, m));
                        assert!((got.factor_at(h, m) - rs / ms).abs() <= 1e-12);
                    }
                    _ => {
                        assert!(!got.is_covered(h, m));
                        assert_eq!(got.factor_at(h, m), 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn hm_fixed_point_per_bin() {
        let (s, usable, model) = gappy_pair(17);
        let binning = HmBinning::default();
        let f = hm_factors(&s, &usable, &model, &binning);
        let corrected = apply_hm_correction(&model, &f, &binning);
        let again = hm_factors(&s, &usable, &corrected.series, &binning);
        for h in 0..24 {
            for m in 1..=12 {
                if f.is_covered(h, m) {
                    assert!(
                        (again.factor_at(h, m) - 1.0).abs() <= 1e-9,
                        "bin ({h},{m}): {}",
                        again.factor_at(h, m)
                    );
                }
            }
        }
    }

    #[test]
    fn hm_scale_equivariance() {
        let (s, usable, model) = gappy_pair(19);
        let binning = HmBinning::default();
        let base = hm_factors(&s, &usable, &model, &binning);
        let scaled = station(
            s.start(),
            s.speeds().iter().map(|v| v.map(|x| x * 3.5)).collect(),
        );
        let f = hm_factors(&scaled, &usable, &model, &binning);
        for h in 0..24 {
            for m in 1..=12 {
                if base.is_covered(h, m) {
                    assert!((f.factor_at(h, m) - 3.5 * base.factor_at(h, m)).abs() <= 1e-12);
                }
            }
        }
        // Mean factor scales the same way.
        let pm = paired_means(&s, &usable, &model).unwrap();
        let pm2 = paired_means(&scaled, &usable, &model).unwrap();
        let f1 = mean_factor(pm.ref_mean, pm.model_mean).unwrap();
        let f2 = mean_factor(pm2.ref_mean, pm2.model_mean).unwrap();
        assert!((f2 - 3.5 * f1).abs() <= 1e-12);
    }

    #[test]
    fn hm_correction_is_local_to_its_bin() {
        let mut f = HmFactors::identity();
        f.set(5, 1, 3.0);
        let start = utc(2006, 1, 1, 0); // January
        let model = HourlySeries::new(start, vec![2.0; 48]);
        let out = apply_hm_correction(&model, &f, &HmBinning::default());
        for (i, v) in out.series.values().iter().enumerate() {
            let expect = if i % 24 == 5 { 6.0 } else { 2.0 };
            assert_eq!(*v, expect, "hour index {i}");
        }
        assert_eq!(out.method, CorrectionMethod::HmStation);
    }

    #[test]
    fn corrections_preserve_zeros() {
        let model = HourlySeries::new(utc(2006, 1, 1, 0), vec![0.0, 3.0, 0.0, 5.0]);
        let m = apply_mean_correction(&model, 1.7, CorrectionMethod::MeanGwa);
        let h = apply_hm_correction(&model, &HmFactors::identity(), &HmBinning::default());
        for out in [m.series.values(), h.series.values()] {
            assert_eq!(out[0], 0.0);
            assert_eq!(out[2], 0.0);
            assert!(out[1] > 0.0 && out[3] > 0.0);
        }
    }

    #[test]
    fn gate_outcomes() {
        let (s, usable, model) = gappy_pair(23);
        // Perfectly correlated: model equals station over the window.
        let values: Vec<f64> = s.speeds().iter().map(|v| v.unwrap_or(1.0)).collect();
        let aligned = HourlySeries::new(s.start(), values);
        match correction_gate(&s, &usable, &aligned, 0.5) {
            GateOutcome::Passed(r) => assert!((r - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        // Anti-correlated: negate around a constant.
        let flipped = aligned.map(|_, v| 20.0 - v);
        assert!(matches!(
            correction_gate(&s, &usable, &flipped, 0.5),
            GateOutcome::BelowThreshold(_)
        ));
        // Constant model: undefined, not zero.
        let flat = aligned.map(|_, _| 6.0);
        assert_eq!(correction_gate(&s, &usable, &flat, 0.5), GateOutcome::Undefined);
        // Empty overlap.
        let far = HourlySeries::new(utc(1990, 1, 1, 0), vec![1.0, 2.0]);
        assert_eq!(correction_gate(&s, &usable, &far, 0.5), GateOutcome::TooFewPairs);
        let _ = model;
    }

    #[test]
    fn gate_threshold_is_inclusive() {
        // Construct pairs with correlation exactly 0.5: x = (1,2,3),
        // y = (1,3,2) has r = 0.5.
        let start = utc(2004, 1, 1, 0);
        let s = station(start, vec![Some(1.0), Some(2.0), Some(3.0)]);
        let mut usable = MonthMask::new();
        usable.insert((2004, 1));
        let model = HourlySeries::new(start, vec![1.0, 3.0, 2.0]);
        match correction_gate(&s, &usable, &model, 0.5) {
            GateOutcome::Passed(r) => assert!((r - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn correlation_invariant_under_mean_correction() {
        let (s, usable, model) = gappy_pair(29);
        let before = match correction_gate(&s, &usable, &model, -1.0) {
            GateOutcome::Passed(r) => r,
            other => panic!("{other:?}"),
        };
        let corrected = apply_mean_correction(&model, 1.8, CorrectionMethod::MeanStation);
        let after = match correction_gate(&s, &usable, &corrected.series, -1.0) {
            GateOutcome::Passed(r) => r,
            other => panic!("{other:?}"),
        };
        assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in CorrectionMethod::ALL {
            assert_eq!(CorrectionMethod::parse(m.name()), Some(m));
        }
        assert_eq!(CorrectionMethod::parse("gwa"), None);
    }

    #[test]
    fn station_series_validation() {
        let loc = GridPoint::new(0.0, 0.0).unwrap();
        assert!(StationSeries::new(
            "s".into(),
            loc,
            utc(2004, 1, 1, 0),
            vec![Some(-0.1)]
        )
        .is_err());
        let bad_start = Utc.with_ymd_and_hms(2004, 1, 1, 0, 30, 0).unwrap();
        assert!(StationSeries::new("s".into(), loc, bad_start, vec![Some(1.0)]).is_err());
        let _ = hours_in_month(2004, 2);
    }
}
