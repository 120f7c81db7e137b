//! Deterministic forward models for ODMR and PL spectra, Zeeman resonance
//! placement, and the linear temperature / laser-heating calibration maps.
//!
//! Lorentzians are unit height and parameterized by their full width at half
//! maximum, so a dip's contrast and a peak's amplitude are directly the
//! height of the feature.
//!
//! Units: frequencies in MHz, wavelengths in nm, temperatures in °C, laser
//! power in mW, fields in mT, rates in counts/s and times in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Standard NV electron gyromagnetic ratio, MHz per mT.
pub const NV_GYROMAGNETIC_MHZ_PER_MT: f64 = 28.024;

/// Default ODMR sweep: 2820–2920 MHz in 0.5 MHz steps.
pub const DEFAULT_ODMR_GRID_MHZ: (f64, f64, f64) = (2820.0, 2920.0, 0.5);

/// Default PL spectrometer grid: 600–800 nm in 0.1 nm steps.
pub const DEFAULT_PL_GRID_NM: (f64, f64, f64) = (600.0, 800.0, 0.1);

/// Unit-height Lorentzian with the given center and FWHM.
#[inline]
pub fn lorentzian<T: Real>(x: T, center: T, fwhm: T) -> T {
    let u = (x - center) * T::lit(2.0) / fwhm;
    T::one() / (T::one() + u * u)
}

/// Lorentzian value and its partial derivatives with respect to center and
/// FWHM.
#[inline]
pub(crate) fn lorentzian_with_derivs<T: Real>(x: T, center: T, fwhm: T) -> (T, T, T) {
    let two = T::lit(2.0);
    let u = (x - center) * two / fwhm;
    let denom = T::one() + u * u;
    let l = T::one() / denom;
    let l2 = l * l;
    let d_center = T::lit(4.0) * u * l2 / fwhm;
    let d_fwhm = two * u * u * l2 / fwhm;
    (l, d_center, d_fwhm)
}

/// One Lorentzian ODMR dip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dip<T> {
    /// MHz
    pub center: T,
    /// MHz
    pub fwhm: T,
    /// Fractional fluorescence drop at the dip center.
    pub contrast: T,
}

/// CW-ODMR forward model: a photon-count baseline with Lorentzian dips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrModel<T> {
    /// counts/s
    pub baseline_rate: T,
    pub dips: Vec<Dip<T>>,
}

impl<T: Real> OdmrModel<T> {
    pub fn new(baseline_rate: T, dips: Vec<Dip<T>>) -> Result<Self> {
        let model = Self {
            baseline_rate,
            dips,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn single(baseline_rate: T, center: T, fwhm: T, contrast: T) -> Result<Self> {
        Self::new(
            baseline_rate,
            vec![Dip {
                center,
                fwhm,
                contrast,
            }],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_rate > T::zero()) || !self.baseline_rate.is_finite() {
            return Err(Error::model("baseline_rate must be positive"));
        }
        let mut total = T::zero();
        for (i, dip) in self.dips.iter().enumerate() {
            if !(dip.fwhm > T::zero()) || !dip.center.is_finite() {
                return Err(Error::model(format!("dip {i}: fwhm must be positive")));
            }
            if !(dip.contrast > T::zero() && dip.contrast < T::one()) {
                return Err(Error::model(format!(
                    "dip {i}: contrast must lie in (0, 1)"
                )));
            }
            total = total + dip.contrast;
        }
        if !(total < T::one()) {
            return Err(Error::model("sum of dip contrasts must be below 1"));
        }
        Ok(())
    }

    /// Expected fluorescence rate (counts/s) at one frequency.
    pub fn rate_at(&self, f: T) -> T {
        let depth: T = self
            .dips
            .iter()
            .map(|d| d.contrast * lorentzian(f, d.center, d.fwhm))
            .sum();
        self.baseline_rate * (T::one() - depth)
    }
}

/// One Lorentzian PL emission line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak<T> {
    /// nm
    pub center: T,
    /// nm
    pub fwhm: T,
    /// Peak rate above background, counts/s per bin.
    pub amplitude: T,
}

/// PL spectrum forward model: Lorentzian lines on a flat background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlModel<T> {
    /// counts/s per bin
    pub background_rate: T,
    pub peaks: Vec<Peak<T>>,
}

impl<T: Real> PlModel<T> {
    pub fn new(background_rate: T, peaks: Vec<Peak<T>>) -> Result<Self> {
        let model = Self {
            background_rate,
            peaks,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_rate >= T::zero()) || !self.background_rate.is_finite() {
            return Err(Error::model("background_rate must be non-negative"));
        }
        for (i, p) in self.peaks.iter().enumerate() {
            if !(p.fwhm > T::zero()) || !p.center.is_finite() {
                return Err(Error::model(format!("peak {i}: fwhm must be positive")));
            }
            if !(p.amplitude > T::zero()) || !p.amplitude.is_finite() {
                return Err(Error::model(format!(
                    "peak {i}: amplitude must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn rate_at(&self, wavelength: T) -> T {
        let lines: T = self
            .peaks
            .iter()
            .map(|p| p.amplitude * lorentzian(wavelength, p.center, p.fwhm))
            .sum();
        self.background_rate + lines
    }
}

fn check_axis_and_exposure<T: Real>(axis: &[T], exposure_s: T) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::invalid("axis is empty"));
    }
    if !(exposure_s > T::zero()) {
        return Err(Error::invalid("exposure_s must be positive"));
    }
    Ok(())
}

/// Expected photon counts of a CW-ODMR sweep: `R·t·[1 − Σ C_k·L_k(f)]`.
pub fn odmr_expected_counts<T: Real>(
    model: &OdmrModel<T>,
    axis: &[T],
    exposure_s: T,
) -> Result<Vec<T>> {
    check_axis_and_exposure(axis, exposure_s)?;
    model.validate()?;
    Ok(axis
        .iter()
        .map(|&f| model.rate_at(f) * exposure_s)
        .collect())
}

/// Expected photon counts of a PL spectrum: `t·[B + Σ A_k·L_k(λ)]`.
pub fn pl_expected_counts<T: Real>(
    model: &PlModel<T>,
    axis: &[T],
    exposure_s: T,
) -> Result<Vec<T>> {
    check_axis_and_exposure(axis, exposure_s)?;
    model.validate()?;
    Ok(axis
        .iter()
        .map(|&l| model.rate_at(l) * exposure_s)
        .collect())
}

/// The two `m_s = ±1` resonances `D ∓ γ·|B∥|`, returned in ascending order.
pub fn zeeman_resonances<T: Real>(d: T, b_parallel: T, gyromagnetic: T) -> (T, T) {
    let shift = gyromagnetic * b_parallel.abs();
    (d - shift, d + shift)
}

/// Linear map between temperature and the NV zero-field splitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvCalibration<T> {
    /// ZFS at the reference temperature, MHz.
    pub d_ref: T,
    /// °C
    pub t_ref: T,
    /// MHz per °C, signed.
    pub slope: T,
}

impl<T: Real> NvCalibration<T> {
    pub fn new(d_ref: T, t_ref: T, slope: T) -> Result<Self> {
        let cal = Self {
            d_ref,
            t_ref,
            slope,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slope == T::zero() || !self.slope.is_finite() {
            return Err(Error::model("NV calibration slope must be non-zero"));
        }
        if !self.d_ref.is_finite() || !self.t_ref.is_finite() {
            return Err(Error::model("NV calibration reference must be finite"));
        }
        Ok(())
    }

    pub fn resonance_at(&self, t: T) -> T {
        self.d_ref + self.slope * (t - self.t_ref)
    }

    pub fn temperature_at(&self, resonance: T) -> T {
        self.t_ref + (resonance - self.d_ref) / self.slope
    }
}

impl Default for NvCalibration<f64> {
    /// 2870 MHz at 25 °C, −73.79 kHz/°C.
    fn default() -> Self {
        Self {
            d_ref: 2870.0,
            t_ref: 25.0,
            slope: -0.07379,
        }
    }
}

/// `f(T) = d_ref + slope·(T − t_ref)`.
pub fn nv_resonance_of_temperature<T: Real>(cal: &NvCalibration<T>, t: T) -> T {
    cal.resonance_at(t)
}

/// Linear maps between temperature and the SiV ZPL position and width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SivCalibration<T> {
    /// nm
    pub pos_ref: T,
    /// nm
    pub fwhm_ref: T,
    /// °C
    pub t_ref: T,
    /// nm per °C
    pub pos_slope: T,
    /// nm per °C
    pub fwhm_slope: T,
}

impl<T: Real> SivCalibration<T> {
    pub fn new(pos_ref: T, fwhm_ref: T, t_ref: T, pos_slope: T, fwhm_slope: T) -> Result<Self> {
        let cal = Self {
            pos_ref,
            fwhm_ref,
            t_ref,
            pos_slope,
            fwhm_slope,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pos_slope == T::zero() || !self.pos_slope.is_finite() {
            return Err(Error::model("SiV position slope must be non-zero"));
        }
        if !(self.fwhm_ref > T::zero()) || !self.fwhm_slope.is_finite() {
            return Err(Error::model("SiV reference FWHM must be positive"));
        }
        if !self.pos_ref.is_finite() || !self.t_ref.is_finite() {
            return Err(Error::model("SiV calibration reference must be finite"));
        }
        Ok(())
    }

    /// `(position, fwhm)` of the ZPL at temperature `t`.
    pub fn zpl_at(&self, t: T) -> (T, T) {
        let dt = t - self.t_ref;
        (
            self.pos_ref + self.pos_slope * dt,
            self.fwhm_ref + self.fwhm_slope * dt,
        )
    }

    pub fn temperature_at(&self, position: T) -> T {
        self.t_ref + (position - self.pos_ref) / self.pos_slope
    }
}

impl Default for SivCalibration<f64> {
    /// 737.0 nm / 4.8 nm at 25 °C, +0.0084 nm/°C and +0.0398 nm/°C.
    fn default() -> Self {
        Self {
            pos_ref: 737.0,
            fwhm_ref: 4.8,
            t_ref: 25.0,
            pos_slope: 0.0084,
            fwhm_slope: 0.0398,
        }
    }
}

pub fn siv_zpl_of_temperature<T: Real>(cal: &SivCalibration<T>, t: T) -> (T, T) {
    cal.zpl_at(t)
}

/// Local laser heating: `T = t_ambient + slope·P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingModel<T> {
    /// °C
    pub t_ambient: T,
    /// K per mW
    pub slope: T,
}

impl<T: Real> HeatingModel<T> {
    pub fn new(t_ambient: T, slope: T) -> Result<Self> {
        let model = Self { t_ambient, slope };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope >= T::zero()) || !self.slope.is_finite() || !self.t_ambient.is_finite() {
            return Err(Error::model("heating slope must be non-negative"));
        }
        Ok(())
    }

    pub fn temperature_at(&self, power_mw: T) -> Result<T> {
        if !(power_mw >= T::zero()) {
            return Err(Error::invalid("laser power must be non-negative"));
        }
        Ok(self.t_ambient + self.slope * power_mw)
    }
}

pub fn temperature_of_laser_power<T: Real>(model: &HeatingModel<T>, power_mw: T) -> Result<T> {
    model.temperature_at(power_mw)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    FrequencyMhz,
    WavelengthNm,
}

impl AxisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisKind::FrequencyMhz => "frequency_mhz",
            AxisKind::WavelengthNm => "wavelength_nm",
        }
    }
}

impl std::str::FromStr for AxisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency_mhz" => Ok(AxisKind::FrequencyMhz),
            "wavelength_nm" => Ok(AxisKind::WavelengthNm),
            other => Err(Error::invalid(format!("unknown axis kind `{other}`"))),
        }
    }
}

/// A sampled spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrace<T> {
    pub axis_kind: AxisKind,
    /// Strictly increasing sample positions.
    pub axis: Vec<T>,
    pub counts: Vec<T>,
    /// Seconds per sample.
    pub exposure_s: T,
    pub timestamp_s: T,
}

impl<T: Real> SpectrumTrace<T> {
    pub fn new(
        axis_kind: AxisKind,
        axis: Vec<T>,
        counts: Vec<T>,
        exposure_s: T,
        timestamp_s: T,
    ) -> Result<Self> {
        let trace = Self {
            axis_kind,
            axis,
            counts,
            exposure_s,
            timestamp_s,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis.len() != self.counts.len() {
            return Err(Error::invalid(format!(
                "axis has {} samples but counts has {}",
                self.axis.len(),
                self.counts.len()
            )));
        }
        if self.axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("axis must be strictly increasing"));
        }
        if self
            .counts
            .iter()
            .any(|&c| !(c >= T::zero()) || !c.is_finite())
        {
            return Err(Error::invalid("counts must be finite and non-negative"));
        }
        if !(self.exposure_s > T::zero()) {
            return Err(Error::invalid("exposure_s must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }
}

/// Uniform grid from `start` to `stop` inclusive (up to rounding of the
/// last step).
pub fn uniform_grid<T: Real>(start: T, stop: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !(stop > start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::invalid(
            "grid needs start < stop and a positive step",
        ));
    }
    let n = ((stop - start) / step + T::lit(1e-9))
        .floor()
        .to_usize()
        .ok_or_else(|| Error::invalid("grid too large"))?;
    Ok((0..=n)
        .map(|i| start + step * T::from_usize_lossy(i))
        .collect())
}

pub fn default_odmr_grid<T: Real>() -> Vec<T> {
    let (a, b, s) = DEFAULT_ODMR_GRID_MHZ;
    uniform_grid(T::lit(a), T::lit(b), T::lit(s)).expect("valid default grid")
}

pub fn default_pl_grid<T: Real>() -> Vec<T> {
    let (a, b, s) = DEFAULT_PL_GRID_NM;
    uniform_grid(T::lit(a), T::lit(b), T::lit(s)).expect("valid default grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn typical_odmr() -> OdmrModel<f64> {
        OdmrModel::single(10_000.0, 2870.0, 12.0, 0.12).unwrap()
    }

    #[test]
    fn odmr_dip_values() {
        let m = typical_odmr();
        let out = odmr_expected_counts(&m, &[2870.0, 2876.0, 2870.0 + 120.0], 1.0).unwrap();
        assert_relative_eq!(out[0], 8800.0, max_relative = 1e-12);
        assert_relative_eq!(out[1], 9400.0, max_relative = 1e-12);
        // 1/(1 + (2·10)²) = 1/401
        assert_relative_eq!(
            out[2],
            10_000.0 * (1.0 - 0.12 / 401.0),
            max_relative = 1e-12
        );
        assert!((out[2] - 9997.0).abs() < 0.05);
    }

    #[test]
    fn odmr_far_field() {
        let m = typical_odmr();
        let out = odmr_expected_counts(&m, &[2870.0 - 1200.0, 2870.0 + 1200.0], 1.0).unwrap();
        for v in out {
            assert!((v - 10_000.0).abs() / 10_000.0 < 1e-4);
        }
    }

    #[test]
    fn odmr_errors() {
        let m = typical_odmr();
        assert!(matches!(
            odmr_expected_counts(&m, &[], 1.0),
            Err(Error::InvalidInput(_))
        ));
        let bad = OdmrModel {
            baseline_rate: 1.0,
            dips: vec![
                Dip {
                    center: 1.0,
                    fwhm: 1.0,
                    contrast: 0.6,
                },
                Dip {
                    center: 2.0,
                    fwhm: 1.0,
                    contrast: 0.5,
                },
            ],
        };
        assert!(matches!(
            odmr_expected_counts(&bad, &[1.0], 1.0),
            Err(Error::InvalidModel(_))
        ));
        assert!(OdmrModel::single(0.0, 1.0, 1.0, 0.1).is_err());
        assert!(OdmrModel::single(1.0, 1.0, 0.0, 0.1).is_err());
        assert!(OdmrModel::single(1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pl_peak_values() {
        let m = PlModel::new(
            1000.0,
            vec![Peak {
                center: 737.0,
                fwhm: 4.8,
                amplitude: 5000.0,
            }],
        )
        .unwrap();
        let out = pl_expected_counts(&m, &[737.0, 739.4], 1.0).unwrap();
        assert_relative_eq!(out[0], 6000.0, max_relative = 1e-12);
        assert_relative_eq!(out[1], 3500.0, max_relative = 1e-12);
    }

    #[test]
    fn pl_two_zpl_maxima() {
        let m = PlModel::new(
            500.0,
            vec![
                Peak {
                    center: 637.0,
                    fwhm: 3.0,
                    amplitude: 2000.0,
                },
                Peak {
                    center: 737.0,
                    fwhm: 4.8,
                    amplitude: 5000.0,
                },
            ],
        )
        .unwrap();
        let axis: Vec<f64> = default_pl_grid();
        let out = pl_expected_counts(&m, &axis, 1.0).unwrap();
        let maxima: Vec<f64> = (1..out.len() - 1)
            .filter(|&i| out[i] > out[i - 1] && out[i] > out[i + 1])
            .map(|i| axis[i])
            .collect();
        assert_eq!(maxima.len(), 2);
        assert!((maxima[0] - 637.0).abs() < 1e-9);
        assert!((maxima[1] - 737.0).abs() < 1e-9);
    }

    #[test]
    fn zeeman_examples() {
        assert_eq!(zeeman_resonances(2870.0, 0.0, 28.024), (2870.0, 2870.0));
        let (lo, hi) = zeeman_resonances(2870.0, 1.0, 28.024);
        assert_relative_eq!(lo, 2841.976, max_relative = 1e-14);
        assert_relative_eq!(hi, 2898.024, max_relative = 1e-14);
        assert_eq!(zeeman_resonances(2870.0, -1.0, 28.024), (lo, hi));
    }

    #[test]
    fn calibration_examples() {
        let nv = NvCalibration::default();
        assert_eq!(nv_resonance_of_temperature(&nv, 25.0), 2870.0);
        assert_relative_eq!(
            nv_resonance_of_temperature(&nv, 35.0),
            2869.2621,
            max_relative = 1e-13
        );
        assert!(NvCalibration::new(2870.0, 25.0, 0.0).is_err());

        let siv = SivCalibration::default();
        assert_eq!(siv_zpl_of_temperature(&siv, 25.0), (737.0, 4.8));
        let (p, w) = siv_zpl_of_temperature(&siv, 125.0);
        assert_relative_eq!(p, 737.84, max_relative = 1e-13);
        assert_relative_eq!(w, 8.78, max_relative = 1e-13);
        assert!(SivCalibration::new(737.0, 4.8, 25.0, 0.0, 0.04).is_err());
    }

    #[test]
    fn heating_examples() {
        let h = HeatingModel::new(25.0, 0.0735).unwrap();
        assert_eq!(temperature_of_laser_power(&h, 0.0).unwrap(), 25.0);
        assert_relative_eq!(
            temperature_of_laser_power(&h, 100.0).unwrap(),
            32.35,
            max_relative = 1e-13
        );
        let step = h.temperature_at(145.0).unwrap() - h.temperature_at(85.0).unwrap();
        assert_relative_eq!(step, 4.41, max_relative = 1e-12);
        assert!(matches!(
            h.temperature_at(-1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(HeatingModel::new(25.0, -0.1).is_err());
    }

    #[test]
    fn trace_validation() {
        assert!(
            SpectrumTrace::new(AxisKind::FrequencyMhz, vec![1.0, 2.0], vec![1.0], 1.0, 0.0)
                .is_err()
        );
        assert!(SpectrumTrace::new(
            AxisKind::FrequencyMhz,
            vec![2.0, 1.0],
            vec![1.0, 1.0],
            1.0,
            0.0
        )
        .is_err());
        assert!(SpectrumTrace::new(
            AxisKind::FrequencyMhz,
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            0.0,
            0.0
        )
        .is_err());
        assert!(SpectrumTrace::new(
            AxisKind::FrequencyMhz,
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            1.0,
            0.0
        )
        .is_ok());
    }

    #[test]
    fn default_grids() {
        let odmr: Vec<f64> = default_odmr_grid();
        assert_eq!(odmr.len(), 201);
        assert_relative_eq!(*odmr.last().unwrap(), 2920.0, max_relative = 1e-12);
        let pl: Vec<f64> = default_pl_grid();
        assert_eq!(pl.len(), 2001);
    }

    #[test]
    fn lorentzian_derivatives_match_finite_differences() {
        let (x, c, w) = (2873.1, 2870.0, 12.0);
        let (_, dc, dw) = lorentzian_with_derivs(x, c, w);
        let h = 1e-6;
        let fd_c = (lorentzian(x, c + h, w) - lorentzian(x, c - h, w)) / (2.0 * h);
        let fd_w = (lorentzian(x, c, w + h) - lorentzian(x, c, w - h)) / (2.0 * h);
        assert_relative_eq!(dc, fd_c, max_relative = 1e-6);
        assert_relative_eq!(dw, fd_w, max_relative = 1e-6);
    }

    #[test]
    fn works_in_f32() {
        let m = OdmrModel::<f32>::single(10_000.0, 2870.0, 12.0, 0.12).unwrap();
        let out = odmr_expected_counts(&m, &[2870.0f32], 1.0).unwrap();
        assert!((out[0] - 8800.0).abs() < 1e-2);
    }
}
