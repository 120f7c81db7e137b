//! Scenario configuration: a strict JSON schema where every section and
//! field has a documented default, so `{"kind": "ramp"}` is a complete file.

use serde::{Deserialize, Serialize};

use crate::crossval::ArtifactConfig;
use crate::error::{Error, Result};
use crate::spectral::{HeatingModel, NvCalibration, SivCalibration};
use crate::stochastic::{
    DEFAULT_BFIELD_DWELL_S, DEFAULT_DRIFT_REL_STD, DEFAULT_DRIFT_REVERSION_RATE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Ramp,
    PrecisionSweep,
    BfieldArtifact,
    LaserModulation,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Ramp => "ramp",
            ScenarioKind::PrecisionSweep => "precision_sweep",
            ScenarioKind::BfieldArtifact => "bfield_artifact",
            ScenarioKind::LaserModulation => "laser_modulation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Time between successive records. Must cover both acquisitions.
    #[serde(default = "default_sample_period")]
    pub sample_period_s: f64,
    /// Feed expected counts straight to the fits: no Poisson noise, no drift.
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub odmr: OdmrSection,
    #[serde(default)]
    pub pl: PlSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub artifact: ArtifactConfig<f64>,
    #[serde(default)]
    pub ramp: RampSection,
    #[serde(default)]
    pub precision: PrecisionSection,
    #[serde(default)]
    pub bfield: BfieldSection,
    #[serde(default)]
    pub laser: LaserSection,
}

fn default_seed() -> u64 {
    1
}
fn default_duration() -> f64 {
    300.0
}
fn default_sample_period() -> f64 {
    1.6
}

/// ODMR sweep grid and photon budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrSection {
    pub start_mhz: f64,
    pub stop_mhz: f64,
    pub step_mhz: f64,
    /// Off-resonance count rate, counts/s. Chosen so the NV and SiV
    /// temperature noise per record are comparable.
    pub baseline_rate: f64,
    /// Total contrast; a Zeeman split shares it equally between two dips.
    pub contrast: f64,
    pub fwhm_mhz: f64,
    /// Duration of one full sweep; each point dwells `sweep_s / n_points`.
    pub sweep_s: f64,
}

impl Default for OdmrSection {
    fn default() -> Self {
        Self {
            start_mhz: 2820.0,
            stop_mhz: 2920.0,
            step_mhz: 0.5,
            baseline_rate: DEFAULT_ODMR_BASELINE_RATE,
            contrast: 0.12,
            fwhm_mhz: 12.0,
            sweep_s: 1.5,
        }
    }
}

/// Gives an NV floor of about 0.16 K/√Hz, matching the SiV channel.
pub const DEFAULT_ODMR_BASELINE_RATE: f64 = 3.5e8;
/// Calibrated with `examples/calibrate_budget.rs` (4000 repetitions per
/// integration time): SiV floor 0.155 K/√Hz, exponent −0.496.
pub const DEFAULT_SIV_PEAK_AMPLITUDE: f64 = 9.6e4;
pub const DEFAULT_PL_BACKGROUND_RATE: f64 = 2.0e3;

/// PL spectrum grid, fit window and photon budget (counts/s per bin).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlSection {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
    /// Wavelength range handed to the ZPL fit.
    pub window_nm: [f64; 2],
    pub peak_amplitude: f64,
    pub background_rate: f64,
    /// NV zero-phonon line outside the window. Off by default: its
    /// Lorentzian tail tilts the in-window background and biases the SiV
    /// position by a few parts in 1e5 across a 40 K ramp.
    pub nv_zpl_amplitude: f64,
    pub nv_zpl_center_nm: f64,
    pub nv_zpl_fwhm_nm: f64,
    pub exposure_s: f64,
}

impl Default for PlSection {
    fn default() -> Self {
        Self {
            start_nm: 600.0,
            stop_nm: 800.0,
            step_nm: 0.1,
            window_nm: [722.0, 752.0],
            peak_amplitude: DEFAULT_SIV_PEAK_AMPLITUDE,
            background_rate: DEFAULT_PL_BACKGROUND_RATE,
            nv_zpl_amplitude: 0.0,
            nv_zpl_center_nm: 637.0,
            nv_zpl_fwhm_nm: 3.0,
            exposure_s: 1.3,
        }
    }
}

/// Common-mode intensity drift applied to both channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub rel_std: f64,
    pub reversion_time_s: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            rel_std: DEFAULT_DRIFT_REL_STD,
            reversion_time_s: 1.0 / DEFAULT_DRIFT_REVERSION_RATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub nv: NvCalibration<f64>,
    pub siv: SivCalibration<f64>,
    pub heating_nv: HeatingModel<f64>,
    pub heating_siv: HeatingModel<f64>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            nv: NvCalibration::default(),
            siv: SivCalibration::default(),
            heating_nv: HeatingModel {
                t_ambient: 25.0,
                slope: 0.0735,
            },
            heating_siv: HeatingModel {
                t_ambient: 25.0,
                slope: 0.0751,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampSection {
    pub start_c: f64,
    pub stop_c: f64,
    pub steps: usize,
}

impl Default for RampSection {
    fn default() -> Self {
        Self {
            start_c: 25.0,
            stop_c: 65.0,
            steps: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrecisionSection {
    /// Each entry sets both the ODMR sweep time and the PL exposure.
    pub integration_times_s: Vec<f64>,
    pub repetitions: usize,
    pub temperature_c: f64,
}

impl Default for PrecisionSection {
    fn default() -> Self {
        Self {
            integration_times_s: vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0],
            repetitions: 100,
            temperature_c: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BfieldSection {
    pub b_max_mt: f64,
    pub dwell_s: f64,
    pub temperature_c: f64,
}

impl Default for BfieldSection {
    fn default() -> Self {
        Self {
            b_max_mt: 0.5,
            dwell_s: DEFAULT_BFIELD_DWELL_S,
            temperature_c: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserSection {
    pub low_mw: f64,
    pub high_mw: f64,
    /// Full cycle; each power level is held for half of it.
    pub period_s: f64,
    /// Multiplies every photon rate. The heated sample is much dimmer than
    /// the bulk precision setup.
    pub photon_scale: f64,
}

impl Default for LaserSection {
    fn default() -> Self {
        Self {
            low_mw: 85.0,
            high_mw: 145.0,
            period_s: 200.0,
            photon_scale: 1.0 / 16.0,
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

fn temperature(key: &str, v: f64) -> Result<()> {
    if (0.0..=200.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("must lie in [0, 200] °C, got {v}"),
        ))
    }
}

fn grid(prefix: &str, start: f64, stop: f64, step: f64) -> Result<()> {
    positive(&format!("{prefix}.step"), step)?;
    if !(start.is_finite() && stop.is_finite() && stop > start) {
        return Err(Error::config(format!("{prefix}.stop"), "must exceed start"));
    }
    Ok(())
}

fn relabel(key: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::InvalidModel(m) | Error::InvalidInput(m) => Error::config(key, m),
        Error::Config { key: k, message } => Error::config(format!("{key}.{k}"), message),
        other => other,
    })
}

impl ScenarioConfig {
    /// Config with every field at its default.
    pub fn with_kind(kind: ScenarioKind) -> Self {
        serde_json::from_value(serde_json::json!({ "kind": kind })).expect("defaults deserialize")
    }

    pub fn validate(&self) -> Result<()> {
        positive("duration_s", self.duration_s)?;
        positive("sample_period_s", self.sample_period_s)?;

        let o = &self.odmr;
        grid("odmr", o.start_mhz, o.stop_mhz, o.step_mhz)?;
        positive("odmr.baseline_rate", o.baseline_rate)?;
        if !(o.contrast > 0.0 && o.contrast < 1.0) {
            return Err(Error::config("odmr.contrast", "must lie in (0, 1)"));
        }
        positive("odmr.fwhm_mhz", o.fwhm_mhz)?;
        positive("odmr.sweep_s", o.sweep_s)?;

        let p = &self.pl;
        grid("pl", p.start_nm, p.stop_nm, p.step_nm)?;
        let [lo, hi] = p.window_nm;
        if !(lo < hi && lo >= p.start_nm && hi <= p.stop_nm) {
            return Err(Error::config(
                "pl.window_nm",
                "must be an increasing pair inside the grid",
            ));
        }
        positive("pl.peak_amplitude", p.peak_amplitude)?;
        non_negative("pl.background_rate", p.background_rate)?;
        non_negative("pl.nv_zpl_amplitude", p.nv_zpl_amplitude)?;
        positive("pl.nv_zpl_fwhm_nm", p.nv_zpl_fwhm_nm)?;
        positive("pl.exposure_s", p.exposure_s)?;

        if self.kind != ScenarioKind::PrecisionSweep {
            if self.sample_period_s < o.sweep_s {
                return Err(Error::config(
                    "sample_period_s",
                    "must be at least odmr.sweep_s",
                ));
            }
            if self.sample_period_s < p.exposure_s {
                return Err(Error::config(
                    "sample_period_s",
                    "must be at least pl.exposure_s",
                ));
            }
        }

        non_negative("drift.rel_std", self.drift.rel_std)?;
        positive("drift.reversion_time_s", self.drift.reversion_time_s)?;

        let c = &self.calibration;
        relabel("calibration.nv", c.nv.validate())?;
        relabel("calibration.siv", c.siv.validate())?;
        relabel("calibration.heating_nv", c.heating_nv.validate())?;
        relabel("calibration.heating_siv", c.heating_siv.validate())?;
        relabel("artifact", self.artifact.validate())?;

        match self.kind {
            ScenarioKind::Ramp => {
                temperature("ramp.start_c", self.ramp.start_c)?;
                temperature("ramp.stop_c", self.ramp.stop_c)?;
                if self.ramp.steps == 0 {
                    return Err(Error::config("ramp.steps", "must be at least 1"));
                }
            }
            ScenarioKind::PrecisionSweep => {
                let pr = &self.precision;
                if pr.integration_times_s.is_empty() {
                    return Err(Error::config(
                        "precision.integration_times_s",
                        "must not be empty",
                    ));
                }
                for &t in &pr.integration_times_s {
                    positive("precision.integration_times_s", t)?;
                }
                if pr.repetitions < 2 {
                    return Err(Error::config("precision.repetitions", "must be at least 2"));
                }
                temperature("precision.temperature_c", pr.temperature_c)?;
            }
            ScenarioKind::BfieldArtifact => {
                non_negative("bfield.b_max_mt", self.bfield.b_max_mt)?;
                positive("bfield.dwell_s", self.bfield.dwell_s)?;
                temperature("bfield.temperature_c", self.bfield.temperature_c)?;
            }
            ScenarioKind::LaserModulation => {
                let l = &self.laser;
                non_negative("laser.low_mw", l.low_mw)?;
                non_negative("laser.high_mw", l.high_mw)?;
                positive("laser.period_s", l.period_s)?;
                positive("laser.photon_scale", l.photon_scale)?;
                for (key, mw) in [("laser.low_mw", l.low_mw), ("laser.high_mw", l.high_mw)] {
                    temperature(key, c.heating_nv.temperature_at(mw)?)?;
                    temperature(key, c.heating_siv.temperature_at(mw)?)?;
                }
            }
        }
        Ok(())
    }

    /// Parse and validate a JSON document. Unknown keys are rejected with
    /// the closest valid key as a suggestion.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| schema_error(&e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Turn a serde message into a `Config` error keyed by the offending field.
fn schema_error(message: &str) -> Error {
    let ticked =
        |s: &str| -> Vec<String> { s.split('`').skip(1).step_by(2).map(String::from).collect() };
    if let Some(rest) = message.strip_prefix("unknown field ") {
        let names = ticked(rest);
        if let Some((unknown, expected)) = names.split_first() {
            let best = expected
                .iter()
                .map(|c| (strsim::jaro_winkler(unknown, c), c))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            let hint = match best {
                Some((score, c)) if score > 0.7 => format!("; did you mean `{c}`?"),
                _ => String::new(),
            };
            return Error::config(unknown.clone(), format!("unknown key{hint}"));
        }
    }
    if let Some(rest) = message.strip_prefix("missing field ") {
        if let Some(name) = ticked(rest).first() {
            return Error::config(name.clone(), "required key is missing");
        }
    }
    if let Some(rest) = message.strip_prefix("unknown variant ") {
        if let Some(name) = ticked(rest).first() {
            return Error::config("kind", format!("unknown value `{name}`: {message}"));
        }
    }
    Error::config("<document>", message.to_string())
}
