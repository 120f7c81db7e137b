//! Simulation and estimation toolkit for dual-channel diamond thermometry.
//!
//! NV centers report temperature through the zero-field splitting seen in
//! CW-ODMR sweeps; SiV centers through the position of their zero-phonon
//! line in the PL spectrum. This crate synthesizes both kinds of noisy
//! spectrum, fits them, and checks the two resulting temperatures against
//! each other.
//!
//! The numerical core ([`spectral`], [`peakfit`], [`thermometry`],
//! [`crossval`]) is generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64` or `f32`. The stochastic processes and the
//! scenario runners work in `f64`.

pub mod crossval;
pub mod error;
pub mod io;
pub mod peakfit;
pub mod scalar;
pub mod scenarios;
pub mod spectral;
pub mod stochastic;
pub mod thermometry;

pub use error::{Error, Result};
pub use scalar::Real;

pub type OdmrModel64 = spectral::OdmrModel<f64>;
pub type OdmrModel32 = spectral::OdmrModel<f32>;
pub type PlModel64 = spectral::PlModel<f64>;
pub type PlModel32 = spectral::PlModel<f32>;
pub type NvCalibration64 = spectral::NvCalibration<f64>;
pub type NvCalibration32 = spectral::NvCalibration<f32>;
pub type SivCalibration64 = spectral::SivCalibration<f64>;
pub type SivCalibration32 = spectral::SivCalibration<f32>;
pub type HeatingModel64 = spectral::HeatingModel<f64>;
pub type HeatingModel32 = spectral::HeatingModel<f32>;
pub type SpectrumTrace64 = spectral::SpectrumTrace<f64>;
pub type SpectrumTrace32 = spectral::SpectrumTrace<f32>;
pub type FitResult64 = peakfit::FitResult<f64>;
pub type FitResult32 = peakfit::FitResult<f32>;
pub type RegressionResult64 = peakfit::RegressionResult<f64>;
pub type RegressionResult32 = peakfit::RegressionResult<f32>;
pub type TemperatureEstimate64 = thermometry::TemperatureEstimate<f64>;
pub type TemperatureEstimate32 = thermometry::TemperatureEstimate<f32>;
pub type ConsistencyReport64 = crossval::ConsistencyReport<f64>;
pub type ArtifactVerdict64 = crossval::ArtifactVerdict<f64>;
pub type ArtifactConfig64 = crossval::ArtifactConfig<f64>;
