//! Vertical extrapolation of wind speed between measurement heights.
//!
//! The workhorse is the power law with a shear exponent derived per time
//! step from two reference heights. A logarithmic profile fitted by least
//! squares over all available heights is provided as an alternative; it
//! can predict negative speeds well above the fit range, which callers
//! must handle (the prediction carries a flag).

use std::fmt;

use thiserror::Error;

use crate::stats;

/// Shear exponent used when the per-hour derivation is degenerate.
pub const DEFAULT_FALLBACK_ALPHA: f64 = 1.0 / 7.0;

#[derive(Debug, Error)]
pub enum VerticalError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("log profile fit needs at least two distinct positive heights")]
    RankDeficient,
    #[error("heights and speeds have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Wind speed magnitude from orthogonal components.
pub fn effective_speed(u: f64, v: f64) -> f64 {
    u.hypot(v)
}

/// A shear exponent together with the height pair it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearParams {
    pub alpha: f64,
    pub h_lo: f64,
    pub h_hi: f64,
}

/// Power-law shear exponent from speeds at two heights:
/// alpha = ln(w_hi / w_lo) / ln(h_hi / h_lo).
///
/// Errors on non-positive speeds or heights and on h_hi <= h_lo; callers
/// substitute a configured fallback exponent in those cases.
pub fn shear_exponent(
    w_lo: f64,
    h_lo: f64,
    w_hi: f64,
    h_hi: f64,
) -> Result<ShearParams, VerticalError> {
    if !(w_lo > 0.0 && w_hi > 0.0) {
        return Err(VerticalError::DegenerateInput("non-positive speed"));
    }
    if !(h_lo > 0.0 && h_hi > 0.0) {
        return Err(VerticalError::DegenerateInput("non-positive height"));
    }
    if h_hi <= h_lo {
        return Err(VerticalError::DegenerateInput("heights not increasing"));
    }
    Ok(ShearParams {
        alpha: (w_hi / w_lo).ln() / (h_hi / h_lo).ln(),
        h_lo,
        h_hi,
    })
}

/// Power-law extrapolation w_ref * (h_target / h_ref)^alpha.
/// Heights must be positive; w_ref = 0 propagates to 0.
pub fn power_law_extrapolate(
    w_ref: f64,
    h_ref: f64,
    h_target: f64,
    alpha: f64,
) -> Result<f64, VerticalError> {
    if !(h_ref > 0.0 && h_target > 0.0) {
        return Err(VerticalError::DegenerateInput("non-positive height"));
    }
    if w_ref < 0.0 {
        return Err(VerticalError::DegenerateInput("negative speed"));
    }
    Ok(w_ref * (h_target / h_ref).powf(alpha))
}

/// Least-squares logarithmic wind profile w(h) = a + b * ln(h).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogProfileFit {
    pub a: f64,
    pub b: f64,
}

/// Fit the log profile through (height, speed) samples by ordinary least
/// squares on ln(height). Requires at least two distinct positive heights.
pub fn log_profile_fit(heights: &[f64], speeds: &[f64]) -> Result<LogProfileFit, VerticalError> {
    if heights.len() != speeds.len() {
        return Err(VerticalError::LengthMismatch(heights.len(), speeds.len()));
    }
    if heights.iter().any(|h| *h <= 0.0) {
        return Err(VerticalError::DegenerateInput("non-positive height"));
    }
    let lnh: Vec<f64> = heights.iter().map(|h| h.ln()).collect();
    let (a, b) = stats::ols_line(&lnh, speeds).ok_or(VerticalError::RankDeficient)?;
    Ok(LogProfileFit { a, b })
}

/// Evaluate a fitted log profile at `h_target` (> 0). The flag is true
/// when the extrapolated speed is negative, which the profile does not
/// preclude.
pub fn log_profile_predict(fit: &LogProfileFit, h_target: f64) -> (f64, bool) {
    debug_assert!(h_target > 0.0, "log profile evaluated at h <= 0");
    let w = fit.a + fit.b * h_target.ln();
    (w, w < 0.0)
}

/// Vertical extrapolation variants selectable at run time. The 2 m based
/// variants require a grid that carries 2 m components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerticalMethod {
    PowerLaw1050,
    PowerLaw210,
    PowerLaw21050,
    LogProfile,
}

impl VerticalMethod {
    pub fn parse(s: &str) -> Result<Self, VerticalError> {
        match s.trim() {
            "power_law_10_50" => Ok(VerticalMethod::PowerLaw1050),
            "power_law_2_10" => Ok(VerticalMethod::PowerLaw210),
            "power_law_2_10_50" => Ok(VerticalMethod::PowerLaw21050),
            "log_profile" => Ok(VerticalMethod::LogProfile),
            _ => Err(VerticalError::DegenerateInput("unknown vertical method")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VerticalMethod::PowerLaw1050 => "power_law_10_50",
            VerticalMethod::PowerLaw210 => "power_law_2_10",
            VerticalMethod::PowerLaw21050 => "power_law_2_10_50",
            VerticalMethod::LogProfile => "log_profile",
        }
    }

    /// Whether the variant needs 2 m wind components.
    pub fn needs_2m(&self) -> bool {
        !matches!(self, VerticalMethod::PowerLaw1050)
    }
}

impl fmt::Display for VerticalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Wind speeds for one hour at the heights a grid provides. `w2` is absent
/// when the grid has no 2 m components. Heights are above ground:
/// the 2 m and 10 m levels sit above the displacement height.
#[derive(Debug, Clone, Copy)]
pub struct LevelSpeeds {
    pub w2: Option<f64>,
    pub w10: f64,
    pub w50: f64,
    /// Displacement height, m.
    pub disp: f64,
}

/// One extrapolated hub-height speed: the raw value may be negative for
/// the log profile; `speed` is clamped at zero, `negative` records it.
#[derive(Debug, Clone, Copy)]
pub struct HubWind {
    pub speed: f64,
    pub negative: bool,
    /// True when the shear derivation was degenerate and the fallback
    /// exponent was used.
    pub fell_back: bool,
}

/// Extrapolate one hour of level speeds to `h_target` with the chosen
/// variant. Degenerate shear derivations (calm air, displacement pushing
/// the levels out of order) fall back to `fallback_alpha` instead of
/// erroring, since they occur routinely in long series.
pub fn hub_speed(
    levels: &LevelSpeeds,
    h_target: f64,
    method: VerticalMethod,
    fallback_alpha: f64,
) -> HubWind {
    let h2 = 2.0 + levels.disp;
    let h10 = 10.0 + levels.disp;
    let h50 = 50.0;
    let from_power_law = |w_lo: f64, h_lo: f64, w_hi: f64, h_hi: f64, w_ref: f64, h_ref: f64| {
        let (alpha, fell_back) = match shear_exponent(w_lo, h_lo, w_hi, h_hi) {
            Ok(p) => (p.alpha, false),
            Err(_) => (fallback_alpha, true),
        };
        let speed = power_law_extrapolate(w_ref.max(0.0), h_ref, h_target, alpha)
            .unwrap_or(0.0);
        HubWind {
            speed,
            negative: false,
            fell_back,
        }
    };
    match method {
        VerticalMethod::PowerLaw1050 => {
            from_power_law(levels.w10, h10, levels.w50, h50, levels.w50, h50)
        }
        VerticalMethod::PowerLaw210 => {
            let w2 = levels.w2.unwrap_or(f64::NAN);
            from_power_law(w2, h2, levels.w10, h10, levels.w10, h10)
        }
        VerticalMethod::PowerLaw21050 => {
            let w2 = levels.w2.unwrap_or(f64::NAN);
            from_power_law(w2, h2, levels.w10, h10, levels.w50, h50)
        }
        VerticalMethod::LogProfile => {
            let mut heights = vec![h10, h50];
            let mut speeds = vec![levels.w10, levels.w50];
            if let Some(w2) = levels.w2 {
                heights.insert(0, h2);
                speeds.insert(0, w2);
            }
            match log_profile_fit(&heights, &speeds) {
                Ok(fit) => {
                    let (w, negative) = log_profile_predict(&fit, h_target);
                    HubWind {
                        speed: w.max(0.0),
                        negative,
                        fell_back: false,
                    }
                }
                Err(_) => HubWind {
                    speed: 0.0,
                    negative: false,
                    fell_back: true,
                },
            }
        }
    }
}
