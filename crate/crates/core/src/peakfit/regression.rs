use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ordinary least-squares line `y = slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult<T> {
    pub slope: T,
    pub intercept: T,
    /// Coefficient of determination, clamped to `[0, 1]`; 0 when `y` has no
    /// variance.
    pub r_squared: T,
    pub slope_std_error: T,
    pub intercept_std_error: T,
    pub n: usize,
}

pub fn linear_regression<T: Real>(xs: &[T], ys: &[T]) -> Result<RegressionResult<T>> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} x values, {} y values",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "regression needs at least 3 points, got {n}"
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("regression input must be finite"));
    }
    let nf = T::from_usize_lossy(n);
    let x_mean = xs.iter().copied().sum::<T>() / nf;
    let y_mean = ys.iter().copied().sum::<T>() / nf;
    let sxx: T = xs.iter().map(|&x| (x - x_mean) * (x - x_mean)).sum();
    if !(sxx > T::zero()) || xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::Degenerate("all x values are equal".into()));
    }

    if ys.iter().all(|&y| y == ys[0]) {
        return Ok(RegressionResult {
            slope: T::zero(),
            intercept: ys[0],
            r_squared: T::zero(),
            slope_std_error: T::zero(),
            intercept_std_error: T::zero(),
            n,
        });
    }

    let sxy: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x - x_mean) * (y - y_mean))
        .sum();
    let syy: T = ys.iter().map(|&y| (y - y_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = (T::one() - sse / syy).max(T::zero()).min(T::one());
    let s2 = sse / T::from_usize_lossy(n - 2);
    let slope_std_error = (s2 / sxx).sqrt();
    let intercept_std_error = (s2 * (T::one() / nf + x_mean * x_mean / sxx)).sqrt();
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared,
        slope_std_error,
        intercept_std_error,
        n,
    })
}

/// `σ(t) = noise_floor·t^exponent`, fitted by least squares in log–log space.
/// `noise_floor` is the value at t = 1 s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<T> {
    pub noise_floor: T,
    pub exponent: T,
    pub exponent_std_error: T,
    /// Relative (log-space) standard error of the noise floor.
    pub noise_floor_rel_error: T,
}

pub fn fit_power_law<T: Real>(times: &[T], sigmas: &[T]) -> Result<PowerLawFit<T>> {
    if times.len() != sigmas.len() {
        return Err(Error::invalid("times and sigmas differ in length"));
    }
    if times.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: times.len(),
        });
    }
    if times
        .iter()
        .chain(sigmas)
        .any(|&v| !(v > T::zero()) || !v.is_finite())
    {
        return Err(Error::invalid(
            "power-law fit needs positive times and sigmas",
        ));
    }
    let lx: Vec<T> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<T> = sigmas.iter().map(|s| s.ln()).collect();
    let reg = linear_regression(&lx, &ly)?;
    Ok(PowerLawFit {
        noise_floor: reg.intercept.exp(),
        exponent: reg.slope,
        exponent_std_error: reg.slope_std_error,
        noise_floor_rel_error: reg.intercept_std_error,
    })
}
