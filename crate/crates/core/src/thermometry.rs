//! Fitted spectral parameters to temperatures, with propagated uncertainty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peakfit::{fit_power_law, FitResult, PowerLawFit};
use crate::scalar::Real;
use crate::spectral::{NvCalibration, SivCalibration};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    NvOdmr,
    SivZpl,
    /// Inverse-variance combination of both channels.
    Fused,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEstimate<T> {
    /// °C
    pub value: T,
    /// 1-sigma, °C
    pub sigma: T,
    pub channel: Channel,
    pub timestamp_s: T,
}

impl<T: Real> TemperatureEstimate<T> {
    pub fn new(value: T, sigma: T, channel: Channel, timestamp_s: T) -> Result<Self> {
        if !(sigma >= T::zero()) {
            return Err(Error::invalid("temperature sigma must be non-negative"));
        }
        Ok(Self {
            value,
            sigma,
            channel,
            timestamp_s,
        })
    }

    /// NV estimate from a resonance (ZFS) value and its uncertainty.
    pub fn from_resonance(f: T, sigma_f: T, cal: &NvCalibration<T>, timestamp_s: T) -> Self {
        Self {
            value: cal.temperature_at(f),
            sigma: sigma_f.abs() / cal.slope.abs(),
            channel: Channel::NvOdmr,
            timestamp_s,
        }
    }

    /// SiV estimate from a ZPL position and its uncertainty.
    pub fn from_zpl_position(
        pos: T,
        sigma_pos: T,
        cal: &SivCalibration<T>,
        timestamp_s: T,
    ) -> Self {
        Self {
            value: cal.temperature_at(pos),
            sigma: sigma_pos.abs() / cal.pos_slope.abs(),
            channel: Channel::SivZpl,
            timestamp_s,
        }
    }
}

/// `T = t_ref + (d_center − d_ref)/slope`, `σ_T = σ_f/|slope|`.
pub fn temperature_from_odmr<T: Real>(
    fit: &FitResult<T>,
    cal: &NvCalibration<T>,
    timestamp_s: T,
) -> Result<TemperatureEstimate<T>> {
    if !fit.converged {
        return Err(Error::Unconverged);
    }
    let f = fit
        .get("d_center")
        .ok_or_else(|| Error::invalid("fit has no d_center"))?;
    let sigma = fit.std_error("d_center").unwrap_or(T::nan());
    Ok(TemperatureEstimate::from_resonance(
        f,
        sigma,
        cal,
        timestamp_s,
    ))
}

/// `T = t_ref + (center − pos_ref)/pos_slope`, `σ_T = σ_λ/|pos_slope|`.
pub fn temperature_from_zpl<T: Real>(
    fit: &FitResult<T>,
    cal: &SivCalibration<T>,
    timestamp_s: T,
) -> Result<TemperatureEstimate<T>> {
    if !fit.converged {
        return Err(Error::Unconverged);
    }
    let pos = fit
        .get("center")
        .ok_or_else(|| Error::invalid("fit has no center"))?;
    let sigma = fit.std_error("center").unwrap_or(T::nan());
    Ok(TemperatureEstimate::from_zpl_position(
        pos,
        sigma,
        cal,
        timestamp_s,
    ))
}

/// Shot-noise-limited CW-ODMR sensitivity `Δω / (C·√R·|dD/dT|)`, in K/√Hz
/// for a linewidth in MHz, a rate in counts/s and `dD/dT` in MHz/K.
pub fn nv_shot_noise_sensitivity<T: Real>(
    contrast: T,
    linewidth_mhz: T,
    photon_rate_cps: T,
    dd_dt_mhz_per_k: T,
) -> Result<T> {
    let inputs = [contrast, linewidth_mhz, photon_rate_cps, dd_dt_mhz_per_k];
    if inputs.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::invalid("sensitivity inputs must all be positive"));
    }
    Ok(linewidth_mhz / (contrast * photon_rate_cps.sqrt() * dd_dt_mhz_per_k))
}

/// Fit `σ_T(t) = η·t^e` to `(integration_time_s, sigma_T)` pairs; `η` is the
/// noise floor in °C/√Hz.
pub fn estimate_noise_floor<T: Real>(series: &[(T, T)]) -> Result<PowerLawFit<T>> {
    let (times, sigmas): (Vec<T>, Vec<T>) = series.iter().copied().unzip();
    fit_power_law(&times, &sigmas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fit_with(name: &str, value: f64, se: f64, converged: bool) -> FitResult<f64> {
        FitResult {
            names: vec![name.into()],
            params: vec![value],
            std_errors: vec![se],
            covariance: vec![vec![se * se]],
            derived: vec![],
            residual_rms: 0.0,
            initial_residual_rms: 0.0,
            chi2: 0.0,
            reduced_chi2: 0.0,
            n_samples: 10,
            converged,
            iterations: 1,
            max_iterations: 200,
        }
    }

    fn odmr_fit(f: f64, se: f64) -> FitResult<f64> {
        let mut fit = fit_with("center", f, se, true);
        fit.derived.push(crate::peakfit::DerivedParam {
            name: "d_center".into(),
            value: f,
            std_error: se,
        });
        fit
    }

    #[test]
    fn odmr_examples() {
        let cal = NvCalibration::default();
        let t = temperature_from_odmr(&odmr_fit(2870.0, 0.0074), &cal, 1.0).unwrap();
        assert_eq!(t.value, 25.0);
        assert_eq!(t.channel, Channel::NvOdmr);
        assert_relative_eq!(t.sigma, 0.0074 / 0.07379, max_relative = 1e-14);
        assert!((t.sigma - 0.1003).abs() < 5e-5);
        let t = temperature_from_odmr(&odmr_fit(2869.2621, 0.0), &cal, 1.0).unwrap();
        assert_relative_eq!(t.value, 35.0, max_relative = 1e-10);
    }

    #[test]
    fn unconverged_fit_is_rejected() {
        let mut fit = odmr_fit(2870.0, 0.01);
        fit.converged = false;
        assert_eq!(
            temperature_from_odmr(&fit, &NvCalibration::default(), 0.0),
            Err(Error::Unconverged)
        );
        let fit = fit_with("center", 737.0, 0.001, false);
        assert_eq!(
            temperature_from_zpl(&fit, &SivCalibration::default(), 0.0),
            Err(Error::Unconverged)
        );
    }

    #[test]
    fn zpl_examples() {
        let cal = SivCalibration::default();
        let t = temperature_from_zpl(&fit_with("center", 737.0, 0.00084, true), &cal, 0.0).unwrap();
        assert_eq!(t.value, 25.0);
        assert_eq!(t.channel, Channel::SivZpl);
        assert_relative_eq!(t.sigma, 0.1, max_relative = 1e-12);
        let t = temperature_from_zpl(&fit_with("center", 737.84, 0.0, true), &cal, 0.0).unwrap();
        assert_relative_eq!(t.value, 125.0, max_relative = 1e-10);
    }

    #[test]
    fn sensitivity_examples() {
        // Hand arithmetic: 12 / (0.12 · 3162.2777 · 0.07379) = 0.428545…
        let eta = nv_shot_noise_sensitivity(0.12, 12.0, 1e7, 0.07379).unwrap();
        assert_relative_eq!(eta, 0.4286, max_relative = 1e-3);
        let half_c = nv_shot_noise_sensitivity(0.24, 12.0, 1e7, 0.07379).unwrap();
        assert_relative_eq!(half_c, eta / 2.0, max_relative = 1e-15);
        let quad_r = nv_shot_noise_sensitivity(0.12, 12.0, 4e7, 0.07379).unwrap();
        assert_relative_eq!(quad_r, eta / 2.0, max_relative = 1e-15);
        assert!(nv_shot_noise_sensitivity(0.0, 12.0, 1e7, 0.07379).is_err());
        assert!(nv_shot_noise_sensitivity(0.12, 12.0, -1.0, 0.07379).is_err());
    }

    #[test]
    fn noise_floor_examples() {
        for eta in [0.155, 0.360] {
            let series: Vec<(f64, f64)> = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0]
                .iter()
                .map(|&t: &f64| (t, eta / t.sqrt()))
                .collect();
            let fit = estimate_noise_floor(&series).unwrap();
            assert_relative_eq!(fit.noise_floor, eta, max_relative = 1e-12);
            assert_relative_eq!(fit.exponent, -0.5, max_relative = 1e-12);
        }
        assert!(estimate_noise_floor::<f64>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn inverse_consistency(t in 0.0f64..100.0) {
            let nv = NvCalibration::default();
            let est = TemperatureEstimate::from_resonance(nv.resonance_at(t), 0.0, &nv, 0.0);
            prop_assert!((est.value - t).abs() < 1e-9);
            let siv = SivCalibration::default();
            let est = TemperatureEstimate::from_zpl_position(siv.zpl_at(t).0, 0.0, &siv, 0.0);
            prop_assert!((est.value - t).abs() < 1e-9);
        }

        #[test]
        fn sigma_scales_with_inverse_slope(sigma_f in 0.0f64..10.0, slope in prop_oneof![-1.0f64..-1e-3, 1e-3f64..1.0]) {
            let cal = NvCalibration::new(2870.0, 25.0, slope).unwrap();
            let est = TemperatureEstimate::from_resonance(2870.0, sigma_f, &cal, 0.0);
            prop_assert!((est.sigma * slope.abs() - sigma_f).abs() <= 1e-12 * sigma_f.max(1.0));
        }

        #[test]
        fn sensitivity_is_homogeneous_in_linewidth(a in 1e-3f64..1e3, lw in 0.1f64..100.0) {
            let base = nv_shot_noise_sensitivity(0.12, lw, 1e7, 0.07379).unwrap();
            let scaled = nv_shot_noise_sensitivity(0.12, a * lw, 1e7, 0.07379).unwrap();
            prop_assert!((scaled - a * base).abs() <= 1e-12 * a * base);
        }
    }
}
