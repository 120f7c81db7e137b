//! Seeded random processes: photon shot noise, slow multiplicative intensity
//! drift, and the fluctuating magnetic-field projection.
//!
//! All randomness flows through an explicit [`SeedState`]; nothing here
//! touches thread-local or global generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this mean, Poisson variates are drawn exactly by inversion; at or
/// above it a rounded normal approximation is used.
pub const POISSON_NORMAL_CROSSOVER: f64 = 30.0;

/// Default stationary relative standard deviation of the intensity drift.
pub const DEFAULT_DRIFT_REL_STD: f64 = 0.0007;
/// Default drift mean-reversion rate, 1/s (300 s reversion time).
pub const DEFAULT_DRIFT_REVERSION_RATE: f64 = 1.0 / 300.0;
/// Default B-field resampling interval, s.
pub const DEFAULT_BFIELD_DWELL_S: f64 = 0.5;

/// Master seed, with deterministic derivation of independent child seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    /// Child seed for the stream `label`. Distinct labels give statistically
    /// independent streams; the mapping is stable across platforms.
    pub fn child(self, label: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(label ^ 0x005E_ED0F_C41D)))
    }

    pub fn state(self) -> SeedState {
        SeedState::new(self)
    }
}

/// Generator state threaded explicitly through every stochastic operation.
#[derive(Clone, Debug)]
pub struct SeedState {
    rng: ChaCha8Rng,
}

impl SeedState {
    pub fn new(seed: RngSeed) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed.0),
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// One Poisson variate with mean `mu` (assumed finite and non-negative).
pub fn sample_poisson(mu: f64, rng: &mut SeedState) -> u64 {
    if mu < POISSON_NORMAL_CROSSOVER {
        let u = rng.uniform();
        let mut p = (-mu).exp();
        let mut cdf = p;
        let mut k = 0u64;
        // e^-30 ≈ 1e-13, so the tail is exhausted well before k = 200.
        while u > cdf && k < 200 {
            k += 1;
            p *= mu / k as f64;
            cdf += p;
        }
        k
    } else {
        let z = rng.standard_normal();
        (mu + mu.sqrt() * z).round().max(0.0) as u64
    }
}

/// Independent Poisson draws, one per expected value.
pub fn sample_poisson_counts(expected: &[f64], rng: &mut SeedState) -> Result<Vec<u64>> {
    if let Some(bad) = expected.iter().find(|&&mu| !(mu >= 0.0) || !mu.is_finite()) {
        return Err(Error::invalid(format!(
            "expected counts must be finite and non-negative, got {bad}"
        )));
    }
    Ok(expected.iter().map(|&mu| sample_poisson(mu, rng)).collect())
}

/// Mean-reverting multiplicative intensity drift. The log of the factor is an
/// Ornstein-Uhlenbeck process with stationary standard deviation
/// `stationary_rel_std`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftState {
    pub current_factor: f64,
    /// 1/s
    pub reversion_rate: f64,
    pub stationary_rel_std: f64,
}

impl DriftState {
    /// Starts at factor 1.
    pub fn new(reversion_rate: f64, stationary_rel_std: f64) -> Result<Self> {
        let state = Self {
            current_factor: 1.0,
            reversion_rate,
            stationary_rel_std,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.current_factor > 0.0) || !self.current_factor.is_finite() {
            return Err(Error::invalid("drift factor must be positive"));
        }
        if !(self.reversion_rate > 0.0) || !self.reversion_rate.is_finite() {
            return Err(Error::invalid("drift reversion_rate must be positive"));
        }
        if !(self.stationary_rel_std >= 0.0) || !self.stationary_rel_std.is_finite() {
            return Err(Error::invalid(
                "drift stationary_rel_std must be non-negative",
            ));
        }
        Ok(())
    }
}

impl Default for DriftState {
    fn default() -> Self {
        Self {
            current_factor: 1.0,
            reversion_rate: DEFAULT_DRIFT_REVERSION_RATE,
            stationary_rel_std: DEFAULT_DRIFT_REL_STD,
        }
    }
}

/// Advance the drift by `dt` seconds using the exact OU transition, so one
/// step of `2·dt` and two steps of `dt` are equal in distribution.
pub fn drift_step(state: &DriftState, dt: f64, rng: &mut SeedState) -> Result<DriftState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt must be positive"));
    }
    state.validate()?;
    let a = (-state.reversion_rate * dt).exp();
    let b = state.stationary_rel_std * (1.0 - a * a).sqrt();
    let log_next = state.current_factor.ln() * a + b * rng.standard_normal();
    Ok(DriftState {
        current_factor: log_next.exp(),
        ..*state
    })
}

/// Piecewise-constant random field projection. Every `dwell_s` seconds a new
/// magnitude `|B| ~ U(0, b_max)` and an isotropic direction are drawn; the
/// projection onto the NV axis is `|B|·u` with `u ~ U(−1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BFieldProcess {
    /// mT
    pub b_max: f64,
    /// s
    pub dwell_s: f64,
    /// mT
    pub current_projection: f64,
    /// Time left until the next resample, s.
    pub until_resample_s: f64,
    /// Number of resamples performed by `bfield_step` so far.
    pub resamples: u64,
}

impl BFieldProcess {
    /// Draws the initial projection and a uniformly random phase of the
    /// resampling clock.
    pub fn new(b_max: f64, dwell_s: f64, rng: &mut SeedState) -> Result<Self> {
        if !(b_max >= 0.0) || !b_max.is_finite() {
            return Err(Error::invalid("b_max must be non-negative"));
        }
        if !(dwell_s > 0.0) {
            return Err(Error::invalid("dwell_s must be positive"));
        }
        let projection = draw_projection(b_max, rng);
        let phase = 1.0 - rng.uniform();
        Ok(Self {
            b_max,
            dwell_s,
            current_projection: projection,
            until_resample_s: if dwell_s.is_finite() {
                phase * dwell_s
            } else {
                f64::INFINITY
            },
            resamples: 0,
        })
    }
}

fn draw_projection(b_max: f64, rng: &mut SeedState) -> f64 {
    let magnitude = b_max * rng.uniform();
    let cos_theta = 2.0 * rng.uniform() - 1.0;
    if b_max == 0.0 {
        0.0
    } else {
        magnitude * cos_theta
    }
}

pub fn bfield_step(proc: &BFieldProcess, dt: f64, rng: &mut SeedState) -> Result<BFieldProcess> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt must be positive"));
    }
    let mut next = *proc;
    next.until_resample_s -= dt;
    // Absorbs rounding in accumulated dt; zero for a frozen (infinite) dwell.
    let slack = if proc.dwell_s.is_finite() {
        1e-9 * proc.dwell_s
    } else {
        0.0
    };
    while next.until_resample_s <= slack {
        next.current_projection = draw_projection(proc.b_max, rng);
        next.until_resample_s += proc.dwell_s;
        next.resamples += 1;
    }
    Ok(next)
}
