//! Run configuration: a flat `key = value` text file with dotted section
//! keys, e.g. `biascorr.max_station_km = 40`.
//!
//! Lines starting with `#` and blank lines are skipped. Unknown and
//! duplicate keys are hard errors so typos cannot silently fall back to
//! defaults. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::biascorr::{
    CorrectionMethod, DEFAULT_MAX_STATION_KM, DEFAULT_MIN_CORRELATION, DEFAULT_MIN_RUN_HOURS,
};
use crate::grid::InterpMethod;
use crate::turbine::{AIR_DENSITY, CUT_IN, CUT_OUT, HUB_HEIGHT_FLOOR, POWER_COEFFICIENT};
use crate::vertical::{VerticalMethod, DEFAULT_FALLBACK_ALPHA};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Syntax {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
}

/// Input file paths; which ones must be present depends on the stage.
#[derive(Debug, Clone, Default)]
pub struct InputPaths {
    pub grid: Option<PathBuf>,
    pub raster: Option<PathBuf>,
    pub parks: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub observed: Option<PathBuf>,
    pub reference_capacity: Option<PathBuf>,
    pub hub_training: Option<PathBuf>,
}

/// Window, output location, and the degradation tolerance that decides
/// the exit status of a completed-but-degraded run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub out_dir: PathBuf,
    pub max_degraded_fraction: f64,
}

/// Method selections; interpolation and correction may list several
/// entries, each combination producing one tagged output set.
#[derive(Debug, Clone)]
pub struct MethodSettings {
    pub interp: Vec<InterpMethod>,
    pub biascorr: Vec<CorrectionMethod>,
    pub vertical: VerticalMethod,
    pub fallback_alpha: f64,
}

/// Where hub heights come from when a park does not state one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HubModelSource {
    /// No regression; cohort means and the final fallback only.
    None,
    /// Fit intercept and slope from the training file.
    Fit,
    /// Coefficients supplied directly.
    Coeffs { intercept: f64, slope: f64 },
}

#[derive(Debug, Clone)]
pub struct TurbineSettings {
    pub cut_in: f64,
    pub cut_out: f64,
    pub cp: f64,
    pub air_density: f64,
    pub hub_floor_m: f64,
    pub hub_model: HubModelSource,
}

#[derive(Debug, Clone)]
pub struct BiasCorrSettings {
    pub max_station_km: f64,
    pub min_correlation: f64,
    pub min_run_hours: usize,
    pub hour_offset: i64,
    /// Correction used when no station matches: `none` or `mean_gwa`.
    pub fallback: CorrectionMethod,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub enabled: bool,
    pub km_list: Vec<f64>,
}

/// Synthetic-scenario shape. The generator writes its bundle to the
/// configured input paths so downstream stages pick it up unchanged.
#[derive(Debug, Clone)]
pub struct SyntheticSettings {
    pub enabled: bool,
    pub seed: u64,
    pub start: NaiveDate,
    pub days: u32,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nlat: usize,
    pub nlon: usize,
    pub raster_step: f64,
    pub base_speed: f64,
    pub alpha: f64,
    pub diurnal_amp: f64,
    pub seasonal_amp: f64,
    pub spatial_amp: f64,
    pub mean_bias: f64,
    pub capacity_bias: f64,
    pub noise_sd: f64,
    pub outlier_noise_sd: f64,
    pub gap_prob: f64,
    pub sparse_gap_prob: f64,
    pub history_years: i32,
}

#[derive(Debug, Clone)]
pub struct Config {
    /// Directory the config file lives in; relative paths resolve here.
    pub dir: PathBuf,
    /// Path of the config file, for later diagnostics.
    pub path: PathBuf,
    /// SHA-256 of the raw file bytes, recorded in the run manifest.
    pub hash: String,
    pub inputs: InputPaths,
    pub run: RunSettings,
    pub methods: MethodSettings,
    pub turbine: TurbineSettings,
    pub biascorr: BiasCorrSettings,
    pub sweep: SweepSettings,
    pub synthetic: SyntheticSettings,
}

/// Raw parsed entries; getters consume keys so leftovers are unknowns.
struct Raw {
    path: PathBuf,
    dir: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl Raw {
    fn parse(path: &Path, dir: &Path, text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Syntax {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("expected `key = value`, got `{trimmed}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    path: path.to_path_buf(),
                    line,
                    msg: "empty key".into(),
                });
            }
            if entries.insert(key.clone(), (line, value)).is_some() {
                return Err(ConfigError::Syntax {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            dir: dir.to_path_buf(),
            entries,
        })
    }

    fn bad(&self, line: usize, msg: impl Into<String>) -> ConfigError {
        ConfigError::Syntax {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn invalid(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn path_opt(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(|(_, v)| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.dir.join(p)
            }
        })
    }

    fn parse_with<T>(
        &mut self,
        key: &str,
        default: T,
        f: impl FnOnce(&str) -> Option<T>,
    ) -> Result<T, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => {
                f(&v).ok_or_else(|| self.bad(line, format!("bad value `{v}` for `{key}`")))
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.parse_with(key, default, |v| v.parse().ok().filter(|x: &f64| x.is_finite()))
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.parse_with(key, default, |v| v.parse().ok())
    }

    fn i64(&mut self, key: &str, default: i64) -> Result<i64, ConfigError> {
        self.parse_with(key, default, |v| v.parse().ok())
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.parse_with(key, default, |v| v.parse().ok())
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.parse_with(key, default, |v| match v {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    fn date_opt(&mut self, key: &str) -> Result<Option<NaiveDate>, ConfigError> {
        self.parse_with(key, None, |v| {
            NaiveDate::parse_from_str(v, "%Y-%m-%d").ok().map(Some)
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(ConfigError::Syntax {
                path: self.path,
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_text(&text, path, &dir)
    }

    fn from_text(text: &str, path: &Path, dir: &Path) -> Result<Self, ConfigError> {
        let hash = sha256_hex(text.as_bytes());
        let mut raw = Raw::parse(path, dir, text)?;

        let inputs = InputPaths {
            grid: raw.path_opt("io.grid"),
            raster: raw.path_opt("io.raster"),
            parks: raw.path_opt("io.parks"),
            stations: raw.path_opt("io.stations"),
            measurements: raw.path_opt("io.measurements"),
            observed: raw.path_opt("io.observed"),
            reference_capacity: raw.path_opt("io.reference_capacity"),
            hub_training: raw.path_opt("io.hub_training"),
        };

        let run = RunSettings {
            start: raw.date_opt("run.start")?,
            end: raw.date_opt("run.end")?,
            out_dir: raw.path_opt("run.out_dir").unwrap_or_else(|| dir.join("out")),
            max_degraded_fraction: raw.f64("run.max_degraded_fraction", 1.0)?,
        };

        let interp = raw.parse_with("interp.methods", vec![InterpMethod::Bilinear], |v| {
            v.split(',')
                .map(|s| InterpMethod::parse(s.trim()).ok())
                .collect()
        })?;
        let biascorr_methods =
            raw.parse_with("biascorr.methods", vec![CorrectionMethod::None], |v| {
                v.split(',')
                    .map(|s| CorrectionMethod::parse(s.trim()))
                    .collect()
            })?;
        let methods = MethodSettings {
            interp,
            biascorr: biascorr_methods,
            vertical: raw.parse_with("vertical.method", VerticalMethod::PowerLaw1050, |v| {
                VerticalMethod::parse(v).ok()
            })?,
            fallback_alpha: raw.f64("vertical.fallback_alpha", DEFAULT_FALLBACK_ALPHA)?,
        };

        let hub_model = match raw.take("turbine.hub_model") {
            None => HubModelSource::None,
            Some((line, v)) => match v.as_str() {
                "fit" => HubModelSource::Fit,
                "coeffs" => {
                    let (il, intercept) = raw
                        .take("turbine.hub_intercept")
                        .ok_or_else(|| raw.invalid("turbine.hub_model = coeffs needs turbine.hub_intercept"))?;
                    let (sl, slope) = raw
                        .take("turbine.hub_slope")
                        .ok_or_else(|| raw.invalid("turbine.hub_model = coeffs needs turbine.hub_slope"))?;
                    let intercept: f64 = intercept
                        .parse()
                        .map_err(|_| raw.bad(il, format!("bad value `{intercept}`")))?;
                    let slope: f64 = slope
                        .parse()
                        .map_err(|_| raw.bad(sl, format!("bad value `{slope}`")))?;
                    HubModelSource::Coeffs { intercept, slope }
                }
                other => return Err(raw.bad(line, format!("bad hub model `{other}`"))),
            },
        };
        let turbine = TurbineSettings {
            cut_in: raw.f64("turbine.cut_in", CUT_IN)?,
            cut_out: raw.f64("turbine.cut_out", CUT_OUT)?,
            cp: raw.f64("turbine.cp", POWER_COEFFICIENT)?,
            air_density: raw.f64("turbine.air_density", AIR_DENSITY)?,
            hub_floor_m: raw.f64("turbine.hub_floor", HUB_HEIGHT_FLOOR)?,
            hub_model,
        };

        let default_fallback = if inputs.raster.is_some() {
            CorrectionMethod::MeanGwa
        } else {
            CorrectionMethod::None
        };
        let biascorr = BiasCorrSettings {
            max_station_km: raw.f64("biascorr.max_station_km", DEFAULT_MAX_STATION_KM)?,
            min_correlation: raw.f64("biascorr.min_correlation", DEFAULT_MIN_CORRELATION)?,
            min_run_hours: raw.usize("biascorr.min_run_hours", DEFAULT_MIN_RUN_HOURS)?,
            hour_offset: raw.i64("biascorr.hour_offset", 0)?,
            fallback: raw.parse_with("biascorr.fallback", default_fallback, |v| {
                CorrectionMethod::parse(v)
            })?,
        };

        let sweep = SweepSettings {
            enabled: raw.bool("sweep.enabled", false)?,
            km_list: raw.parse_with(
                "sweep.km_list",
                vec![30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
                |v| {
                    v.split(',')
                        .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                        .collect()
                },
            )?,
        };

        let synthetic = SyntheticSettings {
            enabled: raw.bool("synthetic.enabled", false)?,
            seed: raw.u64("synthetic.seed", 42)?,
            start: raw
                .date_opt("synthetic.start")?
                .unwrap_or_else(|| NaiveDate::from_ymd_opt(2006, 1, 1).expect("valid")),
            days: raw.u64("synthetic.days", 365)? as u32,
            lat0: raw.f64("synthetic.lat0", -12.0)?,
            lon0: raw.f64("synthetic.lon0", -45.0)?,
            dlat: raw.f64("synthetic.dlat", 0.5)?,
            dlon: raw.f64("synthetic.dlon", 0.625)?,
            nlat: raw.usize("synthetic.nlat", 7)?,
            nlon: raw.usize("synthetic.nlon", 8)?,
            raster_step: raw.f64("synthetic.raster_step", 0.05)?,
            base_speed: raw.f64("synthetic.base_speed", 7.0)?,
            alpha: raw.f64("synthetic.alpha", 0.2)?,
            diurnal_amp: raw.f64("synthetic.diurnal_amp", 0.25)?,
            seasonal_amp: raw.f64("synthetic.seasonal_amp", 0.15)?,
            spatial_amp: raw.f64("synthetic.spatial_amp", 0.1)?,
            mean_bias: raw.f64("synthetic.mean_bias", 0.2)?,
            capacity_bias: raw.f64("synthetic.capacity_bias", 0.93)?,
            noise_sd: raw.f64("synthetic.noise_sd", 0.05)?,
            outlier_noise_sd: raw.f64("synthetic.outlier_noise_sd", 5.0)?,
            gap_prob: raw.f64("synthetic.gap_prob", 0.05)?,
            sparse_gap_prob: raw.f64("synthetic.sparse_gap_prob", 0.55)?,
            history_years: raw.i64("synthetic.history_years", 6)? as i32,
        };

        let config = Config {
            dir: dir.to_path_buf(),
            path: path.to_path_buf(),
            hash,
            inputs,
            run,
            methods,
            turbine,
            biascorr,
            sweep,
            synthetic,
        };
        config.validate(&raw)?;
        raw.finish()?;
        Ok(config)
    }

    fn validate(&self, raw: &Raw) -> Result<(), ConfigError> {
        let bad = |msg: String| raw.invalid(msg);
        if let (Some(s), Some(e)) = (self.run.start, self.run.end) {
            if e < s {
                return Err(bad(format!("empty date range {s}..{e}")));
            }
        }
        let checks: [(&str, bool); 14] = [
            (
                "run.max_degraded_fraction must be in [0, 1]",
                (0.0..=1.0).contains(&self.run.max_degraded_fraction),
            ),
            ("interp.methods must not be empty", !self.methods.interp.is_empty()),
            (
                "biascorr.methods must not be empty",
                !self.methods.biascorr.is_empty(),
            ),
            (
                "vertical.fallback_alpha must be positive",
                self.methods.fallback_alpha > 0.0,
            ),
            ("turbine.cut_in must be positive", self.turbine.cut_in > 0.0),
            (
                "turbine.cut_out must exceed turbine.cut_in",
                self.turbine.cut_out > self.turbine.cut_in,
            ),
            ("turbine.cp must be positive", self.turbine.cp > 0.0),
            (
                "turbine.air_density must be positive",
                self.turbine.air_density > 0.0,
            ),
            (
                "turbine.hub_floor must be positive",
                self.turbine.hub_floor_m > 0.0,
            ),
            (
                "biascorr.max_station_km must be non-negative",
                self.biascorr.max_station_km >= 0.0,
            ),
            (
                "biascorr.min_correlation must be in [-1, 1]",
                (-1.0..=1.0).contains(&self.biascorr.min_correlation),
            ),
            (
                "biascorr.min_run_hours must be positive",
                self.biascorr.min_run_hours > 0,
            ),
            ("sweep.km_list must not be empty", !self.sweep.km_list.is_empty()),
            (
                "synthetic grid must be at least 2x2 with positive spacing and window",
                self.synthetic.nlat >= 2
                    && self.synthetic.nlon >= 2
                    && self.synthetic.dlat > 0.0
                    && self.synthetic.dlon > 0.0
                    && self.synthetic.raster_step > 0.0
                    && self.synthetic.days >= 1
                    && self.synthetic.base_speed > 0.0
                    && self.synthetic.capacity_bias > 0.0
                    && self.synthetic.history_years >= 0,
            ),
        ];
        for (msg, ok) in checks {
            if !ok {
                return Err(bad(msg.to_string()));
            }
        }
        for (name, p) in [
            ("synthetic.gap_prob", self.synthetic.gap_prob),
            ("synthetic.sparse_gap_prob", self.synthetic.sparse_gap_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("{name} must be in [0, 1]")));
            }
        }
        if !matches!(
            self.biascorr.fallback,
            CorrectionMethod::None | CorrectionMethod::MeanGwa
        ) {
            return Err(bad(format!(
                "biascorr.fallback must be none or mean_gwa, got {}",
                self.biascorr.fallback
            )));
        }
        if self.turbine.hub_model == HubModelSource::Fit && self.inputs.hub_training.is_none() {
            return Err(bad("turbine.hub_model = fit needs io.hub_training".into()));
        }
        let needs_raster = self.methods.biascorr.contains(&CorrectionMethod::MeanGwa)
            || (self.biascorr.fallback == CorrectionMethod::MeanGwa
                && self.methods.biascorr.iter().any(|m| {
                    matches!(m, CorrectionMethod::MeanStation | CorrectionMethod::HmStation)
                }));
        if needs_raster && self.inputs.raster.is_none() {
            return Err(bad("mean_gwa correction needs io.raster".into()));
        }
        let needs_stations = self.methods.biascorr.iter().any(|m| {
            matches!(m, CorrectionMethod::MeanStation | CorrectionMethod::HmStation)
        });
        if needs_stations
            && (self.inputs.stations.is_none() || self.inputs.measurements.is_none())
        {
            return Err(bad(
                "station corrections need io.stations and io.measurements".into(),
            ));
        }
        Ok(())
    }

    /// Apply the CLI `--method` override: an interpolation name replaces
    /// the interpolation list, a correction name replaces the correction
    /// list.
    pub fn apply_method_override(&mut self, name: &str) -> Result<(), ConfigError> {
        if let Ok(m) = InterpMethod::parse(name) {
            self.methods.interp = vec![m];
            return Ok(());
        }
        if let Some(m) = CorrectionMethod::parse(name) {
            self.methods.biascorr = vec![m];
            return Ok(());
        }
        Err(ConfigError::Invalid {
            path: self.path.clone(),
            msg: format!("unknown method `{name}`"),
        })
    }
}
