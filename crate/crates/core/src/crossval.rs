//! Cross-validation of the NV and SiV temperature channels: slope
//! consistency of the two spectral observables, per-sample agreement,
//! windowed artifact detection and inverse-variance fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peakfit::{linear_regression, RegressionResult};
use crate::scalar::Real;
use crate::spectral::{NvCalibration, SivCalibration};
use crate::thermometry::{Channel, TemperatureEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport<T> {
    /// SiV ZPL position (nm) regressed on NV resonance frequency (MHz).
    pub regression: RegressionResult<T>,
    /// nm per MHz
    pub expected_slope: T,
    pub slope_z: T,
}

/// Slope of ZPL position against NV resonance implied by two calibrations:
/// `pos_slope / nv_slope`, nm per MHz.
pub fn expected_channel_slope<T: Real>(nv: &NvCalibration<T>, siv: &SivCalibration<T>) -> T {
    siv.pos_slope / nv.slope
}

/// Regress SiV ZPL positions on NV resonance frequencies and score the
/// fitted slope against `expected_slope`.
///
/// Differences below floating-point resolution of the slope give `z = 0`, so
/// exactly collinear data do not divide by a zero standard error.
pub fn channel_regression<T: Real>(
    nv_freqs: &[T],
    siv_positions: &[T],
    expected_slope: T,
) -> Result<ConsistencyReport<T>> {
    if nv_freqs.len() != siv_positions.len() {
        return Err(Error::invalid(format!(
            "channel lengths differ: {} NV vs {} SiV",
            nv_freqs.len(),
            siv_positions.len()
        )));
    }
    let regression = linear_regression(nv_freqs, siv_positions)?;
    let diff = regression.slope - expected_slope;
    let resolution = T::lit(1e-9) * regression.slope.abs().max(expected_slope.abs());
    let slope_z = if diff.abs() <= resolution {
        T::zero()
    } else {
        diff / regression.slope_std_error.max(resolution)
    };
    Ok(ConsistencyReport {
        regression,
        expected_slope,
        slope_z,
    })
}

/// `(a − b)/√(σa² + σb²)`.
pub fn consistency_z<T: Real>(a: &TemperatureEstimate<T>, b: &TemperatureEstimate<T>) -> Result<T> {
    let diff = a.value - b.value;
    let var = a.sigma * a.sigma + b.sigma * b.sigma;
    if var > T::zero() {
        Ok(diff / var.sqrt())
    } else if diff == T::zero() {
        Ok(T::zero())
    } else {
        Err(Error::UndefinedZ)
    }
}

/// Inverse-variance weighted mean of two estimates.
pub fn fuse<T: Real>(
    a: &TemperatureEstimate<T>,
    b: &TemperatureEstimate<T>,
) -> Result<TemperatureEstimate<T>> {
    if !(a.sigma > T::zero()) || !(b.sigma > T::zero()) {
        return Err(Error::invalid("fusion needs positive sigmas"));
    }
    let wa = T::one() / (a.sigma * a.sigma);
    let wb = T::one() / (b.sigma * b.sigma);
    let w = wa + wb;
    Ok(TemperatureEstimate {
        value: (wa * a.value + wb * b.value) / w,
        sigma: T::one() / w.sqrt(),
        channel: Channel::Fused,
        timestamp_s: a.timestamp_s.max(b.timestamp_s),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactReason {
    None,
    VarianceRatio,
    ZScore,
    Both,
}

impl ArtifactReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactReason::None => "none",
            ArtifactReason::VarianceRatio => "variance_ratio",
            ArtifactReason::ZScore => "z_score",
            ArtifactReason::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactVerdict<T> {
    pub window_start_s: T,
    pub window_end_s: T,
    /// `var(T_nv) / var(T_siv)`; 1 when both variances vanish.
    pub variance_ratio: T,
    pub max_abs_z: T,
    pub flagged: bool,
    pub reason: ArtifactReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactConfig<T> {
    pub variance_ratio_threshold: T,
    /// Per-sample |z| above which a window is flagged.
    pub z_threshold: T,
    pub min_window: usize,
    /// Length of the tumbling windows used by [`monitor_tumbling`].
    pub window_len: usize,
}

impl<T: Real> Default for ArtifactConfig<T> {
    fn default() -> Self {
        Self {
            variance_ratio_threshold: T::lit(10.0),
            z_threshold: T::lit(4.0),
            min_window: 10,
            window_len: 20,
        }
    }
}

impl<T: Real> ArtifactConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_ratio_threshold > T::zero()) {
            return Err(Error::config(
                "variance_ratio_threshold",
                "must be positive",
            ));
        }
        if !(self.z_threshold > T::zero()) {
            return Err(Error::config("z_threshold", "must be positive"));
        }
        if self.min_window < 2 {
            return Err(Error::config("min_window", "must be at least 2"));
        }
        if self.window_len < self.min_window {
            return Err(Error::config("window_len", "must be at least min_window"));
        }
        Ok(())
    }
}

fn sample_variance<T: Real>(values: &[T]) -> T {
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one())
}

/// Judge one time-ordered window of `(nv, siv)` estimate pairs.
///
/// Non-finite estimates (failed fits) count as an infinite z-score.
pub fn artifact_monitor<T: Real>(
    window: &[(TemperatureEstimate<T>, TemperatureEstimate<T>)],
    config: &ArtifactConfig<T>,
) -> Result<ArtifactVerdict<T>> {
    if window.len() < config.min_window.max(2) {
        return Err(Error::TooFewSamples {
            needed: config.min_window.max(2),
            got: window.len(),
        });
    }
    let finite: Vec<_> = window
        .iter()
        .filter(|(a, b)| {
            a.value.is_finite() && b.value.is_finite() && a.sigma.is_finite() && b.sigma.is_finite()
        })
        .collect();
    let mut max_abs_z = if finite.len() < window.len() {
        T::infinity()
    } else {
        T::zero()
    };
    for (a, b) in &finite {
        let z = consistency_z(a, b)
            .map(|z| z.abs())
            .unwrap_or(T::infinity());
        max_abs_z = max_abs_z.max(z);
    }

    let variance_ratio = if finite.len() >= 2 {
        let nv: Vec<T> = finite.iter().map(|(a, _)| a.value).collect();
        let siv: Vec<T> = finite.iter().map(|(_, b)| b.value).collect();
        let (vn, vs) = (sample_variance(&nv), sample_variance(&siv));
        if vs > T::zero() {
            vn / vs
        } else if vn > T::zero() {
            T::infinity()
        } else {
            T::one()
        }
    } else {
        T::one()
    };

    let by_variance = variance_ratio > config.variance_ratio_threshold;
    let by_z = max_abs_z > config.z_threshold;
    let reason = match (by_variance, by_z) {
        (false, false) => ArtifactReason::None,
        (true, false) => ArtifactReason::VarianceRatio,
        (false, true) => ArtifactReason::ZScore,
        (true, true) => ArtifactReason::Both,
    };
    Ok(ArtifactVerdict {
        window_start_s: window[0].0.timestamp_s,
        window_end_s: window[window.len() - 1].0.timestamp_s,
        variance_ratio,
        max_abs_z,
        flagged: reason != ArtifactReason::None,
        reason,
    })
}

/// Run [`artifact_monitor`] over non-overlapping windows of
/// `config.window_len` pairs. A trailing remainder is judged on its own when
/// it holds at least `min_window` pairs and dropped otherwise.
pub fn monitor_tumbling<T: Real>(
    pairs: &[(TemperatureEstimate<T>, TemperatureEstimate<T>)],
    config: &ArtifactConfig<T>,
) -> Vec<ArtifactVerdict<T>> {
    pairs
        .chunks(config.window_len.max(1))
        .filter(|w| w.len() >= config.min_window.max(2))
        .map(|w| artifact_monitor(w, config).expect("window length checked"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn est(value: f64, sigma: f64) -> TemperatureEstimate<f64> {
        TemperatureEstimate::new(value, sigma, Channel::NvOdmr, 0.0).unwrap()
    }

    #[test]
    fn z_examples() {
        assert_eq!(
            consistency_z(&est(30.0, 0.1), &est(30.0, 0.2)).unwrap(),
            0.0
        );
        // −0.5 / √0.05
        let z = consistency_z(&est(30.0, 0.1), &est(30.5, 0.2)).unwrap();
        assert_relative_eq!(z, -0.5 / 0.05f64.sqrt(), max_relative = 1e-14);
        assert!((z + 2.236).abs() < 1e-3);
        let swapped = consistency_z(&est(30.5, 0.2), &est(30.0, 0.1)).unwrap();
        assert_eq!(swapped, -z);
        assert_eq!(
            consistency_z(&est(1.0, 0.0), &est(2.0, 0.0)),
            Err(Error::UndefinedZ)
        );
    }

    #[test]
    fn fusion_examples() {
        let f = fuse(&est(30.0, 0.1), &est(30.3, 0.3)).unwrap();
        // weights 100 and 11.11: (3000 + 336.67)/111.11 = 30.03
        assert_relative_eq!(f.value, 30.03, max_relative = 1e-12);
        assert_relative_eq!(
            f.sigma,
            (100.0f64 + 1.0 / 0.09).powf(-0.5),
            max_relative = 1e-12
        );
        assert!((f.sigma - 0.0949).abs() < 1e-4);
        assert_eq!(f.channel, Channel::Fused);

        let g = fuse(&est(25.0, 0.2), &est(25.0, 0.2)).unwrap();
        assert_relative_eq!(g.sigma, 0.2 / 2.0f64.sqrt(), max_relative = 1e-14);
        assert_eq!(g.value, 25.0);

        let h = fuse(&est(25.0, 0.2), &est(40.0, 0.2e6)).unwrap();
        assert!((h.value - 25.0).abs() < 1e-9);
        assert!(fuse(&est(25.0, 0.0), &est(25.0, 0.1)).is_err());
    }

    #[test]
    fn noiseless_ramp_regression() {
        let nv = NvCalibration::default();
        let siv = SivCalibration::default();
        let temps: Vec<f64> = (0..10).map(|i| 25.0 + 40.0 * i as f64 / 9.0).collect();
        let f: Vec<f64> = temps.iter().map(|&t| nv.resonance_at(t)).collect();
        let p: Vec<f64> = temps.iter().map(|&t| siv.zpl_at(t).0).collect();
        let expected = expected_channel_slope(&nv, &siv);
        assert!((expected + 0.11384).abs() < 5e-6);
        let report = channel_regression(&f, &p, expected).unwrap();
        assert_relative_eq!(report.regression.slope, expected, max_relative = 1e-9);
        assert!((report.regression.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(report.slope_z, 0.0);
    }

    #[test]
    fn regression_errors_and_null_case() {
        assert!(channel_regression(&[1.0, 2.0, 3.0], &[1.0, 2.0], -0.1).is_err());
        assert!(channel_regression(&[1.0, 2.0], &[1.0, 2.0], -0.1).is_err());
        let mut rng = crate::stochastic::RngSeed(5).state();
        let a: Vec<f64> = (0..50).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.standard_normal()).collect();
        let r = channel_regression(&a, &b, -0.11384).unwrap();
        assert!(r.slope_z.is_finite());
        assert!(r.regression.r_squared < 0.3);
    }

    fn window(
        nv: &[f64],
        siv: &[f64],
        sigma: f64,
    ) -> Vec<(TemperatureEstimate<f64>, TemperatureEstimate<f64>)> {
        nv.iter()
            .zip(siv)
            .enumerate()
            .map(|(i, (&a, &b))| {
                let t = i as f64;
                (
                    TemperatureEstimate {
                        value: a,
                        sigma,
                        channel: Channel::NvOdmr,
                        timestamp_s: t,
                    },
                    TemperatureEstimate {
                        value: b,
                        sigma,
                        channel: Channel::SivZpl,
                        timestamp_s: t,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn constant_window_is_clean() {
        let w = window(&[25.0; 20], &[25.0; 20], 0.1);
        let v = artifact_monitor(&w, &ArtifactConfig::default()).unwrap();
        assert_eq!(v.variance_ratio, 1.0);
        assert!(!v.flagged);
        assert_eq!(v.reason, ArtifactReason::None);
        assert_eq!((v.window_start_s, v.window_end_s), (0.0, 19.0));
    }

    #[test]
    fn monitor_reasons() {
        let cfg = ArtifactConfig::default();
        let noisy: Vec<f64> = (0..20)
            .map(|i| 25.0 + if i % 2 == 0 { 0.5 } else { -0.5 })
            .collect();
        let quiet: Vec<f64> = (0..20)
            .map(|i| 25.0 + if i % 2 == 0 { 0.05 } else { -0.05 })
            .collect();
        let v = artifact_monitor(&window(&noisy, &quiet, 1.0), &cfg).unwrap();
        assert_eq!(v.reason, ArtifactReason::VarianceRatio);
        assert!(v.flagged);
        let v = artifact_monitor(&window(&noisy, &quiet, 0.01), &cfg).unwrap();
        assert_eq!(v.reason, ArtifactReason::Both);
        let offset: Vec<f64> = quiet.iter().map(|q| q + 1.0).collect();
        let v = artifact_monitor(&window(&offset, &quiet, 0.1), &cfg).unwrap();
        assert_eq!(v.reason, ArtifactReason::ZScore);
        assert!(matches!(
            artifact_monitor(&window(&[25.0; 5], &[25.0; 5], 0.1), &cfg),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn failed_estimates_flag_the_window() {
        let mut nv = vec![25.0; 20];
        nv[7] = f64::NAN;
        let v =
            artifact_monitor(&window(&nv, &[25.0; 20], 0.1), &ArtifactConfig::default()).unwrap();
        assert!(v.flagged);
        assert_eq!(v.reason, ArtifactReason::ZScore);
    }

    #[test]
    fn tumbling_windows() {
        let cfg = ArtifactConfig::default();
        let w = window(&[25.0; 55], &[25.0; 55], 0.1);
        // 20 + 20 + 15 (15 ≥ min_window 10)
        assert_eq!(monitor_tumbling(&w, &cfg).len(), 3);
        let w = window(&[25.0; 45], &[25.0; 45], 0.1);
        assert_eq!(monitor_tumbling(&w, &cfg).len(), 2);
    }

    proptest! {
        #[test]
        fn z_is_antisymmetric(a in -100.0f64..100.0, b in -100.0f64..100.0, sa in 0.01f64..5.0, sb in 0.01f64..5.0) {
            let z1 = consistency_z(&est(a, sa), &est(b, sb)).unwrap();
            let z2 = consistency_z(&est(b, sb), &est(a, sa)).unwrap();
            prop_assert_eq!(z1, -z2);
        }

        #[test]
        fn fusion_never_loses_precision(a in -100.0f64..100.0, b in -100.0f64..100.0, sa in 0.01f64..5.0, sb in 0.01f64..5.0) {
            let f = fuse(&est(a, sa), &est(b, sb)).unwrap();
            prop_assert!(f.sigma <= sa.min(sb));
            prop_assert!(f.value >= a.min(b) - 1e-9 && f.value <= a.max(b) + 1e-9);
        }
    }
}
