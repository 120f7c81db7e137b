//! Seeded end-to-end experiments: temperature ramps, precision sweeps,
//! fluctuating-field artifact runs and laser-power modulation.

mod config;
mod pipeline;
mod record;

pub use config::{
    BfieldSection, CalibrationSection, DriftSection, LaserSection, OdmrSection, PlSection,
    PrecisionSection, RampSection, ScenarioConfig, ScenarioKind, DEFAULT_ODMR_BASELINE_RATE,
    DEFAULT_PL_BACKGROUND_RATE, DEFAULT_SIV_PEAK_AMPLITUDE,
};
pub use record::{FieldValue, ScenarioRecord, RECORD_COLUMNS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossval::{consistency_z, monitor_tumbling};
use crate::error::{Error, Result};
use crate::peakfit::{linear_regression, PowerLawFit, RegressionResult};
use crate::spectral::SpectrumTrace;
use crate::stochastic::RngSeed;
use crate::thermometry::{estimate_noise_floor, Channel, TemperatureEstimate};
use pipeline::{Acquisition, Channels};

/// What a scenario produces: a record time series, or for precision sweeps
/// a per-integration-time summary.
#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioOutput {
    Records(Vec<ScenarioRecord>),
    Precision(PrecisionSweep),
}

/// Validate `config` and run the scenario it names.
pub fn run(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    Ok(match config.kind {
        ScenarioKind::Ramp => ScenarioOutput::Records(run_ramp(config)?),
        ScenarioKind::PrecisionSweep => ScenarioOutput::Precision(run_precision_sweep(config)?),
        ScenarioKind::BfieldArtifact => ScenarioOutput::Records(run_bfield_artifact(config)?),
        ScenarioKind::LaserModulation => ScenarioOutput::Records(run_laser_modulation(config)?),
    })
}

fn expect_kind(config: &ScenarioConfig, kind: ScenarioKind) -> Result<()> {
    config.validate()?;
    if config.kind != kind {
        return Err(Error::config(
            "kind",
            format!(
                "expected `{}`, got `{}`",
                kind.as_str(),
                config.kind.as_str()
            ),
        ));
    }
    Ok(())
}

fn record_count(config: &ScenarioConfig) -> usize {
    ((config.duration_s / config.sample_period_s) + 1e-9)
        .floor()
        .max(1.0) as usize
}

struct Step {
    time_s: f64,
    true_t: f64,
    laser_mw: f64,
    channels: Channels,
}

fn missing(channel: Channel, t: f64) -> TemperatureEstimate<f64> {
    TemperatureEstimate {
        value: f64::NAN,
        sigma: f64::NAN,
        channel,
        timestamp_s: t,
    }
}

fn assemble(steps: Vec<Step>, config: &ScenarioConfig) -> Vec<ScenarioRecord> {
    let pairs: Vec<_> = steps
        .iter()
        .map(|s| {
            (
                s.channels
                    .nv
                    .unwrap_or_else(|| missing(Channel::NvOdmr, s.time_s)),
                s.channels
                    .siv
                    .unwrap_or_else(|| missing(Channel::SivZpl, s.time_s)),
            )
        })
        .collect();
    // Noiseless fits report near-zero sigmas, so z and variance ratios are
    // rounding noise there. Nothing to monitor.
    let verdicts = if config.noiseless {
        Vec::new()
    } else {
        monitor_tumbling(&pairs, &config.artifact)
    };
    let window = config.artifact.window_len.max(1);

    steps
        .into_iter()
        .zip(&pairs)
        .enumerate()
        .map(|(i, (s, (nv, siv)))| {
            let nv_fit = &s.channels.nv_fit;
            let siv_fit = &s.channels.siv_fit;
            let n_dips = nv_fit.n_dips();
            let nv_ok = nv_fit.converged;
            let siv_ok = siv_fit.converged;
            let pick = |ok: bool, v: Option<f64>| if ok { v.unwrap_or(f64::NAN) } else { f64::NAN };
            let dips = |prefix: &str| -> f64 {
                nv_fit
                    .names
                    .iter()
                    .zip(&nv_fit.params)
                    .filter(|(n, _)| n.starts_with(prefix))
                    .map(|(_, &v)| v)
                    .sum()
            };
            let z = if nv.value.is_finite() && siv.value.is_finite() {
                consistency_z(nv, siv).unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            ScenarioRecord {
                time_s: s.time_s,
                true_temperature_c: s.true_t,
                laser_mw: s.laser_mw,
                b_projection_mt: s.channels.b_mean_mt,
                nv_n_dips: n_dips,
                nv_f0_mhz: pick(nv_ok, nv_fit.get("d_center")),
                nv_f0_sigma_mhz: pick(nv_ok, nv_fit.std_error("d_center")),
                nv_contrast: pick(nv_ok, Some(dips("contrast"))),
                nv_fwhm_mhz: pick(nv_ok, Some(dips("fwhm") / n_dips as f64)),
                siv_pos_nm: pick(siv_ok, siv_fit.get("center")),
                siv_pos_sigma_nm: pick(siv_ok, siv_fit.std_error("center")),
                siv_fwhm_nm: pick(siv_ok, siv_fit.get("fwhm")),
                t_nv_c: nv.value,
                t_nv_sigma_c: nv.sigma,
                t_siv_c: siv.value,
                t_siv_sigma_c: siv.sigma,
                z_score: z,
                artifact_flag: verdicts.get(i / window).is_some_and(|v| v.flagged),
            }
        })
        .collect()
}

/// Step the temperature from `ramp.start_c` to `ramp.stop_c` in
/// `ramp.steps` equal increments, one record per step spaced by
/// `sample_period_s`. `duration_s` is not used.
pub fn run_ramp(config: &ScenarioConfig) -> Result<Vec<ScenarioRecord>> {
    expect_kind(config, ScenarioKind::Ramp)?;
    let r = &config.ramp;
    let mut acq = Acquisition::new(config, RngSeed(config.seed))?;
    let mut steps = Vec::with_capacity(r.steps);
    for k in 0..r.steps {
        let frac = if r.steps > 1 {
            k as f64 / (r.steps - 1) as f64
        } else {
            0.0
        };
        let temp = r.start_c + (r.stop_c - r.start_c) * frac;
        let t = k as f64 * config.sample_period_s;
        let channels = acq.acquire(t, temp, temp, config.sample_period_s)?;
        steps.push(Step {
            time_s: t,
            true_t: temp,
            laser_mw: f64::NAN,
            channels,
        });
    }
    Ok(assemble(steps, config))
}

/// Constant temperature under a piecewise-constant random field. The dip
/// count of every ODMR fit is chosen by BIC; the PL path never sees B.
pub fn run_bfield_artifact(config: &ScenarioConfig) -> Result<Vec<ScenarioRecord>> {
    expect_kind(config, ScenarioKind::BfieldArtifact)?;
    let b = &config.bfield;
    let mut acq =
        Acquisition::new(config, RngSeed(config.seed))?.with_bfield(b.b_max_mt, b.dwell_s)?;
    acq.auto_dips = true;
    let mut steps = Vec::new();
    for k in 0..record_count(config) {
        let t = k as f64 * config.sample_period_s;
        let channels = acq.acquire(t, b.temperature_c, b.temperature_c, config.sample_period_s)?;
        steps.push(Step {
            time_s: t,
            true_t: b.temperature_c,
            laser_mw: f64::NAN,
            channels,
        });
    }
    Ok(assemble(steps, config))
}

/// Laser power at time `t`: low for the first half of each period.
pub fn laser_power_at(laser: &LaserSection, t: f64) -> f64 {
    if (t / laser.period_s).fract() < 0.5 {
        laser.low_mw
    } else {
        laser.high_mw
    }
}

/// Square-wave laser heating. Each channel's true temperature follows its
/// own heating model; records carry the NV truth.
pub fn run_laser_modulation(config: &ScenarioConfig) -> Result<Vec<ScenarioRecord>> {
    expect_kind(config, ScenarioKind::LaserModulation)?;
    let cal = &config.calibration;
    let mut acq = Acquisition::new(config, RngSeed(config.seed))?;
    acq.photon_scale = config.laser.photon_scale;
    let mut steps = Vec::new();
    for k in 0..record_count(config) {
        let t = k as f64 * config.sample_period_s;
        let p = laser_power_at(&config.laser, t);
        let t_nv = cal.heating_nv.temperature_at(p)?;
        let t_siv = cal.heating_siv.temperature_at(p)?;
        let channels = acq.acquire(t, t_nv, t_siv, config.sample_period_s)?;
        steps.push(Step {
            time_s: t,
            true_t: t_nv,
            laser_mw: p,
            channels,
        });
    }
    Ok(assemble(steps, config))
}

/// Raw spectra of a single acquisition, before any fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSpectra {
    pub odmr: SpectrumTrace<f64>,
    pub pl: SpectrumTrace<f64>,
}

/// One seeded acquisition of both spectra at `temperature_c` under a static
/// field projection `b_parallel_mt`. Uses the config's grids, budgets and
/// noise settings; the scenario kind is ignored.
pub fn simulate_spectra(
    config: &ScenarioConfig,
    temperature_c: f64,
    b_parallel_mt: f64,
) -> Result<SimulatedSpectra> {
    config.validate()?;
    if !(0.0..=200.0).contains(&temperature_c) {
        return Err(Error::invalid(format!(
            "temperature {temperature_c} °C is outside [0, 200]"
        )));
    }
    if !b_parallel_mt.is_finite() {
        return Err(Error::invalid("field projection must be finite"));
    }
    let mut acq = Acquisition::new(config, RngSeed(config.seed))?.with_static_field(b_parallel_mt);
    let (odmr, _) = acq.odmr_trace(0.0, temperature_c)?;
    let pl = acq.pl_trace(0.0, temperature_c)?;
    Ok(SimulatedSpectra { odmr, pl })
}

/// Fitted temperature step between the two laser levels, per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct StepAmplitudes {
    pub nv: RegressionResult<f64>,
    pub siv: RegressionResult<f64>,
}

/// Regress each channel's temperature on a 0/1 high-power indicator; the
/// slope is the step amplitude. Records with a failed fit are skipped.
pub fn laser_step_amplitudes(
    records: &[ScenarioRecord],
    laser: &LaserSection,
) -> Result<StepAmplitudes> {
    let series = |pick: fn(&ScenarioRecord) -> f64| -> Result<RegressionResult<f64>> {
        let (x, y): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter(|r| pick(r).is_finite())
            .map(|r| {
                (
                    if r.laser_mw == laser.high_mw {
                        1.0
                    } else {
                        0.0
                    },
                    pick(r),
                )
            })
            .unzip();
        linear_regression(&x, &y)
    };
    Ok(StepAmplitudes {
        nv: series(|r| r.t_nv_c)?,
        siv: series(|r| r.t_siv_c)?,
    })
}

/// Spread of the temperature estimates at one integration time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPoint {
    pub integration_time_s: f64,
    pub repetitions: usize,
    pub nv_sigma_c: f64,
    pub nv_mean_c: f64,
    pub nv_failures: usize,
    pub siv_sigma_c: f64,
    pub siv_mean_c: f64,
    pub siv_failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionSweep {
    pub points: Vec<PrecisionPoint>,
    /// `σ_T = floor·t^exponent` per channel; `None` if it could not be fitted.
    pub nv_floor: Option<PowerLawFit<f64>>,
    pub siv_floor: Option<PowerLawFit<f64>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// For each integration time, acquire `precision.repetitions` independent
/// single-shot measurements at a fixed temperature and report the empirical
/// spread of both channels. The integration time sets both the ODMR sweep
/// duration and the PL exposure. Repetitions run in parallel, each on its
/// own derived seed, so results do not depend on scheduling.
pub fn run_precision_sweep(config: &ScenarioConfig) -> Result<PrecisionSweep> {
    expect_kind(config, ScenarioKind::PrecisionSweep)?;
    let pr = &config.precision;
    let master = RngSeed(config.seed);
    let mut points = Vec::with_capacity(pr.integration_times_s.len());
    for (i, &tau) in pr.integration_times_s.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.odmr.sweep_s = tau;
        cfg.pl.exposure_s = tau;
        let level = master.child(i as u64);
        let shots: Vec<(f64, f64)> = (0..pr.repetitions)
            .into_par_iter()
            .map(|r| -> Result<(f64, f64)> {
                let mut acq = Acquisition::new(&cfg, level.child(r as u64))?;
                let c = acq.acquire(0.0, pr.temperature_c, pr.temperature_c, tau)?;
                Ok((
                    c.nv.map_or(f64::NAN, |e| e.value),
                    c.siv.map_or(f64::NAN, |e| e.value),
                ))
            })
            .collect::<Result<_>>()?;
        let nv: Vec<f64> = shots
            .iter()
            .map(|s| s.0)
            .filter(|v| v.is_finite())
            .collect();
        let siv: Vec<f64> = shots
            .iter()
            .map(|s| s.1)
            .filter(|v| v.is_finite())
            .collect();
        let (nv_mean_c, nv_sigma_c) = mean_std(&nv);
        let (siv_mean_c, siv_sigma_c) = mean_std(&siv);
        points.push(PrecisionPoint {
            integration_time_s: tau,
            repetitions: pr.repetitions,
            nv_sigma_c,
            nv_mean_c,
            nv_failures: pr.repetitions - nv.len(),
            siv_sigma_c,
            siv_mean_c,
            siv_failures: pr.repetitions - siv.len(),
        });
    }
    let floor = |pick: fn(&PrecisionPoint) -> f64| {
        let series: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| pick(p).is_finite() && pick(p) > 0.0)
            .map(|p| (p.integration_time_s, pick(p)))
            .collect();
        estimate_noise_floor(&series).ok()
    };
    let nv_floor = floor(|p| p.nv_sigma_c);
    let siv_floor = floor(|p| p.siv_sigma_c);
    Ok(PrecisionSweep {
        points,
        nv_floor,
        siv_floor,
    })
}
