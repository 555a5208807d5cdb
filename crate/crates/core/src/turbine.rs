//! Turbine characteristics and the specific-power based power curve.
//!
//! Parks are simulated with one representative turbine scaled to the
//! installed capacity. Missing hub heights are estimated from the rotor
//! diameter by a linear model; whatever is still missing after that is
//! filled with the mean of the commissioning-year cohort.

use thiserror::Error;

use crate::stats;

/// Air density at the curve's reference conditions, kg/m3.
pub const AIR_DENSITY: f64 = 1.225;
/// Power coefficient assumed over the ramp of the curve.
pub const POWER_COEFFICIENT: f64 = 0.45;
/// Default cut-in and cut-out speeds, m/s.
pub const CUT_IN: f64 = 3.0;
pub const CUT_OUT: f64 = 25.0;
/// Lowest hub height the diameter regression may return, m.
pub const HUB_HEIGHT_FLOOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TurbineError {
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("hub height model needs at least two distinct diameters")]
    RankDeficient,
    #[error("power curve is degenerate: rated speed {rated:.3} not inside (cut_in {cut_in}, cut_out {cut_out})")]
    DegenerateCurve {
        rated: f64,
        cut_in: f64,
        cut_out: f64,
    },
    #[error("cannot fill {0}: no park provides a value")]
    Unfillable(&'static str),
}

/// Rated power over swept rotor area, W/m2.
pub fn specific_power(capacity_kw: f64, rotor_diameter_m: f64) -> Result<f64, TurbineError> {
    if capacity_kw <= 0.0 {
        return Err(TurbineError::NonPositive("capacity_kw", capacity_kw));
    }
    if rotor_diameter_m <= 0.0 {
        return Err(TurbineError::NonPositive("rotor_diameter_m", rotor_diameter_m));
    }
    let area = std::f64::consts::PI * (rotor_diameter_m / 2.0).powi(2);
    Ok(capacity_kw * 1000.0 / area)
}

/// Linear hub height model over rotor diameter, with a floor applied at
/// prediction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubHeightModel {
    pub intercept: f64,
    pub slope: f64,
    pub floor_m: f64,
}

/// Fit hub height against rotor diameter by ordinary least squares.
pub fn fit_hub_height_model(
    pairs: &[(f64, f64)],
    floor_m: f64,
) -> Result<HubHeightModel, TurbineError> {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (intercept, slope) = stats::ols_line(&xs, &ys).ok_or(TurbineError::RankDeficient)?;
    Ok(HubHeightModel {
        intercept,
        slope,
        floor_m,
    })
}

/// Predicted hub height for a rotor diameter, never below the floor.
pub fn estimate_hub_height(model: &HubHeightModel, rotor_diameter_m: f64) -> f64 {
    (model.intercept + model.slope * rotor_diameter_m).max(model.floor_m)
}

/// One value that may still need cohort filling, keyed by install year.
#[derive(Debug, Clone, Copy)]
pub struct CohortEntry {
    pub install_year: i32,
    pub value: Option<f64>,
}

/// Fill missing entries with the mean over present entries of the same
/// install year, falling back to the global mean for years without any.
/// Present values are never touched, so the operation is idempotent.
pub fn fill_missing_from_cohort(
    entries: &mut [CohortEntry],
    field: &'static str,
) -> Result<(), TurbineError> {
    let present: Vec<(i32, f64)> = entries
        .iter()
        .filter_map(|e| e.value.map(|v| (e.install_year, v)))
        .collect();
    if present.is_empty() {
        return Err(TurbineError::Unfillable(field));
    }
    let global = stats::mean(&present.iter().map(|p| p.1).collect::<Vec<_>>());
    for e in entries.iter_mut() {
        if e.value.is_some() {
            continue;
        }
        let year: Vec<f64> = present
            .iter()
            .filter(|(y, _)| *y == e.install_year)
            .map(|(_, v)| *v)
            .collect();
        e.value = Some(if year.is_empty() {
            global
        } else {
            stats::mean(&year)
        });
    }
    Ok(())
}

/// Resolved characteristics of a park's representative turbine.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbineSpec {
    pub capacity_kw: f64,
    pub rotor_diameter_m: f64,
    pub hub_height_m: f64,
    pub specific_power_wm2: f64,
    pub install_year: i32,
}

impl TurbineSpec {
    pub fn validate(&self) -> Result<(), TurbineError> {
        for (name, v) in [
            ("capacity_kw", self.capacity_kw),
            ("rotor_diameter_m", self.rotor_diameter_m),
            ("hub_height_m", self.hub_height_m),
            ("specific_power_wm2", self.specific_power_wm2),
        ] {
            // Negated so NaN fails the check too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(v > 0.0) {
                return Err(TurbineError::NonPositive(name, v));
            }
        }
        Ok(())
    }
}

/// Capacity-factor curve parametrized by specific power: zero below
/// cut-in, a cubic ramp up to the rated speed, flat one until cut-out,
/// zero above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
}

/// Derive the power curve for a specific power. The rated speed comes from
/// the rated power balance: SP = rho/2 * cp * v^3, so
/// v = (2 SP / (rho cp))^(1/3).
pub fn build_power_curve(
    specific_power_wm2: f64,
    cut_in: f64,
    cut_out: f64,
    air_density: f64,
    cp: f64,
) -> Result<PowerCurve, TurbineError> {
    for (name, v) in [
        ("specific_power_wm2", specific_power_wm2),
        ("cut_in", cut_in),
        ("air_density", air_density),
        ("cp", cp),
    ] {
        // Negated so NaN fails the check too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(v > 0.0) {
            return Err(TurbineError::NonPositive(name, v));
        }
    }
    let rated = (2.0 * specific_power_wm2 / (air_density * cp)).cbrt();
    if rated <= cut_in || rated >= cut_out {
        return Err(TurbineError::DegenerateCurve {
            rated,
            cut_in,
            cut_out,
        });
    }
    Ok(PowerCurve {
        cut_in,
        rated_speed: rated,
        cut_out,
    })
}

impl PowerCurve {
    /// Capacity factor in [0, 1] for a hub-height wind speed.
    pub fn capacity_factor(&self, v: f64) -> f64 {
        if v < self.cut_in || v > self.cut_out {
            return 0.0;
        }
        if v >= self.rated_speed {
            return 1.0;
        }
        let num = v.powi(3) - self.cut_in.powi(3);
        let den = self.rated_speed.powi(3) - self.cut_in.powi(3);
        (num / den).clamp(0.0, 1.0)
    }
}

/// Elementwise capacity factors for a hub-height wind speed series.
pub fn simulate_turbine(curve: &PowerCurve, winds: &[f64]) -> Vec<f64> {
    winds.iter().map(|&v| curve.capacity_factor(v)).collect()
}
