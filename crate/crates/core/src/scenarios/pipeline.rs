//! Per-record acquisition shared by every scenario. Turns true temperatures
//! into noisy spectra, then into fitted temperature estimates per channel.

use super::config::ScenarioConfig;
use crate::error::Result;
use crate::peakfit::{fit_odmr_dips, fit_pl_peak, select_dip_count, FitResult};
use crate::spectral::{
    uniform_grid, zeeman_resonances, AxisKind, Dip, OdmrModel, Peak, PlModel, SpectrumTrace,
    NV_GYROMAGNETIC_MHZ_PER_MT,
};
use crate::stochastic::{
    bfield_step, drift_step, sample_poisson, BFieldProcess, DriftState, RngSeed, SeedState,
};
use crate::thermometry::{temperature_from_odmr, temperature_from_zpl, TemperatureEstimate};

// Child-stream labels. Each subsystem draws only from its own stream, so
// e.g. the B process can change without touching the PL noise.
const STREAM_ODMR: u64 = 1;
const STREAM_PL: u64 = 2;
const STREAM_DRIFT: u64 = 3;
const STREAM_BFIELD: u64 = 4;

fn draw(noiseless: bool, mu: f64, rng: &mut SeedState) -> f64 {
    if noiseless {
        mu
    } else {
        sample_poisson(mu, rng) as f64
    }
}

pub(crate) struct Channels {
    pub nv_fit: FitResult<f64>,
    pub nv: Option<TemperatureEstimate<f64>>,
    pub siv_fit: FitResult<f64>,
    pub siv: Option<TemperatureEstimate<f64>>,
    pub b_mean_mt: f64,
}

pub(crate) struct Acquisition<'a> {
    cfg: &'a ScenarioConfig,
    odmr_axis: Vec<f64>,
    pl_axis: Vec<f64>,
    odmr_rng: SeedState,
    pl_rng: SeedState,
    drift_rng: SeedState,
    b_rng: SeedState,
    drift: DriftState,
    bfield: Option<BFieldProcess>,
    /// Pick one or two dips by BIC instead of always fitting one.
    pub auto_dips: bool,
    pub photon_scale: f64,
    pub sweep_s: f64,
    pub exposure_s: f64,
}

impl<'a> Acquisition<'a> {
    pub fn new(cfg: &'a ScenarioConfig, seed: RngSeed) -> Result<Self> {
        let o = &cfg.odmr;
        let p = &cfg.pl;
        Ok(Self {
            cfg,
            odmr_axis: uniform_grid(o.start_mhz, o.stop_mhz, o.step_mhz)?,
            pl_axis: uniform_grid(p.start_nm, p.stop_nm, p.step_nm)?,
            odmr_rng: seed.child(STREAM_ODMR).state(),
            pl_rng: seed.child(STREAM_PL).state(),
            drift_rng: seed.child(STREAM_DRIFT).state(),
            b_rng: seed.child(STREAM_BFIELD).state(),
            drift: DriftState::new(1.0 / cfg.drift.reversion_time_s, cfg.drift.rel_std)?,
            bfield: None,
            auto_dips: false,
            photon_scale: 1.0,
            sweep_s: o.sweep_s,
            exposure_s: p.exposure_s,
        })
    }

    pub fn with_bfield(mut self, b_max: f64, dwell_s: f64) -> Result<Self> {
        self.bfield = Some(BFieldProcess::new(b_max, dwell_s, &mut self.b_rng)?);
        Ok(self)
    }

    fn intensity(&self) -> f64 {
        let drift = if self.cfg.noiseless {
            1.0
        } else {
            self.drift.current_factor
        };
        drift * self.photon_scale
    }

    /// Hold the field projection at `b_mt` for the whole run.
    pub fn with_static_field(mut self, b_mt: f64) -> Self {
        self.bfield = Some(BFieldProcess {
            b_max: b_mt.abs(),
            dwell_s: f64::INFINITY,
            current_projection: b_mt,
            until_resample_s: f64::INFINITY,
            resamples: 0,
        });
        self
    }

    /// Acquire one ODMR sweep, stepping the field process point by point.
    pub fn odmr_trace(&mut self, t: f64, t_nv: f64) -> Result<(SpectrumTrace<f64>, f64)> {
        let o = &self.cfg.odmr;
        let d = self.cfg.calibration.nv.resonance_at(t_nv);
        let half = Dip {
            center: d,
            fwhm: o.fwhm_mhz,
            contrast: o.contrast / 2.0,
        };
        let mut model = OdmrModel::new(o.baseline_rate, vec![half, half])?;
        let dwell = self.sweep_s / self.odmr_axis.len() as f64;
        let scale = self.intensity() * dwell;
        let mut counts = Vec::with_capacity(self.odmr_axis.len());
        let mut b_sum = 0.0;
        for &f in &self.odmr_axis {
            let b = self.bfield.map_or(0.0, |p| p.current_projection);
            b_sum += b;
            let (lo, hi) = zeeman_resonances(d, b, NV_GYROMAGNETIC_MHZ_PER_MT);
            model.dips[0].center = lo;
            model.dips[1].center = hi;
            let mu = model.rate_at(f) * scale;
            counts.push(draw(self.cfg.noiseless, mu, &mut self.odmr_rng));
            if let Some(p) = &self.bfield {
                self.bfield = Some(bfield_step(p, dwell, &mut self.b_rng)?);
            }
        }
        let b_mean = b_sum / self.odmr_axis.len() as f64;
        let trace = SpectrumTrace::new(
            AxisKind::FrequencyMhz,
            self.odmr_axis.clone(),
            counts,
            dwell,
            t,
        )?;
        Ok((trace, b_mean))
    }

    pub fn pl_trace(&mut self, t: f64, t_siv: f64) -> Result<SpectrumTrace<f64>> {
        let p = &self.cfg.pl;
        let (pos, fwhm) = self.cfg.calibration.siv.zpl_at(t_siv);
        let mut peaks = vec![Peak {
            center: pos,
            fwhm,
            amplitude: p.peak_amplitude,
        }];
        if p.nv_zpl_amplitude > 0.0 {
            peaks.push(Peak {
                center: p.nv_zpl_center_nm,
                fwhm: p.nv_zpl_fwhm_nm,
                amplitude: p.nv_zpl_amplitude,
            });
        }
        let model = PlModel::new(p.background_rate, peaks)?;
        let scale = self.intensity() * self.exposure_s;
        let noiseless = self.cfg.noiseless;
        let rng = &mut self.pl_rng;
        let counts = self
            .pl_axis
            .iter()
            .map(|&l| draw(noiseless, model.rate_at(l) * scale, rng))
            .collect();
        SpectrumTrace::new(
            AxisKind::WavelengthNm,
            self.pl_axis.clone(),
            counts,
            self.exposure_s,
            t,
        )
    }

    /// Acquire and analyse both channels at time `t`, then advance the
    /// drift and field processes by `period` seconds in total.
    pub fn acquire(&mut self, t: f64, t_nv: f64, t_siv: f64, period: f64) -> Result<Channels> {
        let (odmr, b_mean_mt) = self.odmr_trace(t, t_nv)?;
        let pl = self.pl_trace(t, t_siv)?;

        let nv_fit = if self.auto_dips {
            select_dip_count(&odmr)?.1
        } else {
            fit_odmr_dips(&odmr, 1)?
        };
        let [lo, hi] = self.cfg.pl.window_nm;
        let siv_fit = fit_pl_peak(&pl, (lo, hi))?;
        let nv = temperature_from_odmr(&nv_fit, &self.cfg.calibration.nv, t).ok();
        let siv = temperature_from_zpl(&siv_fit, &self.cfg.calibration.siv, t).ok();

        self.drift = drift_step(&self.drift, period, &mut self.drift_rng)?;
        let rest = period - self.sweep_s;
        if let (Some(p), true) = (&self.bfield, rest > 0.0) {
            self.bfield = Some(bfield_step(p, rest, &mut self.b_rng)?);
        }
        Ok(Channels {
            nv_fit,
            nv,
            siv_fit,
            siv,
            b_mean_mt,
        })
    }
}
