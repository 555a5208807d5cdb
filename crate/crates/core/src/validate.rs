//! Daily aggregation of simulated power and the error metrics comparing
//! simulated with observed generation per region.

use std::collections::BTreeMap;

use chrono::{NaiveDate, Timelike};
use thiserror::Error;

use crate::fleet::{CapacitySeries, FleetError, GenerationSeries};
use crate::stats;
use crate::timeseries::HourlySeries;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("no paired days to compare")]
    EmptyPairing,
    #[error("region `{0}`: mean capacity over the validation window is zero")]
    ZeroMeanCapacity(String),
    #[error("region `{0}`: no capacity data over the validation window")]
    NoCapacityOverlap(String),
    #[error("simulated and observed data share no region")]
    NoCommonRegions,
    #[error(transparent)]
    Fleet(#[from] FleetError),
}

/// Collapse an hourly power series (MW) into daily energy (GWh).
///
/// Only complete UTC days (all 24 hours present) are kept; partial days at
/// either end are dropped.
pub fn daily_energy(power_mw: &HourlySeries) -> Vec<(NaiveDate, f64)> {
    let n = power_mw.len();
    if n == 0 {
        return Vec::new();
    }
    let lead = ((24 - power_mw.start().hour()) % 24) as usize;
    let mut out = Vec::new();
    let mut i = lead;
    while i + 24 <= n {
        let date = power_mw.time_at(i).date_naive();
        let sum: f64 = power_mw.values()[i..i + 24].iter().sum();
        out.push((date, sum / 1000.0));
        i += 24;
    }
    out
}

/// [`daily_energy`] packaged as a regional series.
pub fn daily_energy_series(
    region: &str,
    power_mw: &HourlySeries,
) -> Result<GenerationSeries, ValidateError> {
    let daily = daily_energy(power_mw);
    let (dates, values) = daily.into_iter().unzip();
    Ok(GenerationSeries::new(region.to_string(), dates, values)?)
}

/// Pearson correlation over paired days; `None` when undefined (fewer than
/// two pairs or zero variance) rather than 0.
pub fn pearson(sim: &[f64], obs: &[f64]) -> Option<f64> {
    stats::pearson(sim, obs)
}

/// Root mean square error, in the units of the inputs.
pub fn rmse(sim: &[f64], obs: &[f64]) -> Result<f64, ValidateError> {
    assert_eq!(sim.len(), obs.len());
    if sim.is_empty() {
        return Err(ValidateError::EmptyPairing);
    }
    let ms = sim
        .iter()
        .zip(obs)
        .map(|(s, o)| (s - o) * (s - o))
        .sum::<f64>()
        / sim.len() as f64;
    Ok(ms.sqrt())
}

/// Mean bias error; positive means the simulation overestimates.
pub fn mbe(sim: &[f64], obs: &[f64]) -> Result<f64, ValidateError> {
    assert_eq!(sim.len(), obs.len());
    if sim.is_empty() {
        return Err(ValidateError::EmptyPairing);
    }
    Ok(sim.iter().zip(obs).map(|(s, o)| s - o).sum::<f64>() / sim.len() as f64)
}

/// Normalize absolute errors by the energy a region would produce per day
/// at its mean installed capacity, making them comparable across regions.
pub fn relative_metrics(
    rmse_gwh: f64,
    mbe_gwh: f64,
    mean_capacity_mw: f64,
    region: &str,
) -> Result<(f64, f64), ValidateError> {
    if mean_capacity_mw <= 0.0 {
        return Err(ValidateError::ZeroMeanCapacity(region.to_string()));
    }
    let full_day_gwh = mean_capacity_mw * 24.0 / 1000.0;
    Ok((rmse_gwh / full_day_gwh, mbe_gwh / full_day_gwh))
}

/// Error metrics for one region under one method tag.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub region: String,
    pub method: String,
    pub n_days: usize,
    pub correlation: Option<f64>,
    pub rmse_gwh: f64,
    pub mbe_gwh: f64,
    pub mean_sim_gwh: f64,
    pub mean_obs_gwh: f64,
    pub mean_capacity_mw: f64,
    pub rel_rmse: f64,
    pub rel_mbe: f64,
}

/// Compare simulated against observed generation on every region both
/// sides report, over the date intersection per region.
///
/// Regions present on only one side are skipped with a warning. Errors
/// only when no region is shared at all.
pub fn evaluate(
    sim: &BTreeMap<String, GenerationSeries>,
    obs: &BTreeMap<String, GenerationSeries>,
    capacity: &BTreeMap<String, CapacitySeries>,
    method: &str,
) -> Result<Vec<MetricReport>, ValidateError> {
    for region in sim.keys() {
        if !obs.contains_key(region) {
            log::warn!("region {region}: simulated but not observed; skipped");
        }
    }
    for region in obs.keys() {
        if !sim.contains_key(region) {
            log::warn!("region {region}: observed but not simulated; skipped");
        }
    }
    let mut reports = Vec::new();
    let mut any_common = false;
    for (region, sim_series) in sim {
        let Some(obs_series) = obs.get(region) else {
            continue;
        };
        any_common = true;
        let mut dates = Vec::new();
        let mut s = Vec::new();
        let mut o = Vec::new();
        for (d, sv) in sim_series.iter() {
            if let Some(ov) = obs_series.get(d) {
                dates.push(d);
                s.push(sv);
                o.push(ov);
            }
        }
        if s.is_empty() {
            log::warn!("region {region}: no overlapping days; skipped");
            continue;
        }
        let cap = capacity
            .get(region)
            .and_then(|c| c.mean_over(&dates))
            .ok_or_else(|| ValidateError::NoCapacityOverlap(region.clone()))?;
        let rmse_gwh = rmse(&s, &o)?;
        let mbe_gwh = mbe(&s, &o)?;
        let (rel_rmse, rel_mbe) = relative_metrics(rmse_gwh, mbe_gwh, cap, region)?;
        reports.push(MetricReport {
            region: region.clone(),
            method: method.to_string(),
            n_days: s.len(),
            correlation: pearson(&s, &o),
            rmse_gwh,
            mbe_gwh,
            mean_sim_gwh: stats::mean(&s),
            mean_obs_gwh: stats::mean(&o),
            mean_capacity_mw: cap,
            rel_rmse,
            rel_mbe,
        });
    }
    if !any_common {
        return Err(ValidateError::NoCommonRegions);
    }
    Ok(reports)
}
