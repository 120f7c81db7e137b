//! Weighted Levenberg-Marquardt for one-dimensional curve models with
//! analytic Jacobians.
//!
//! Minimizes `χ²(p) = Σ wᵢ·(yᵢ − f(xᵢ; p))²` with Marquardt's diagonal
//! damping. Termination: relative χ² decrease below `ftol` on an accepted
//! step, a relative step below `xtol`, no damping level producing a descent
//! step (the minimum is resolved to working precision), or the iteration cap.
//! Trial points are projected onto the model's feasible region.

use super::linalg::spd_solve;
use crate::scalar::Real;

/// A model `f(x; p)` with its gradient with respect to `p`.
pub trait CurveModel<T: Real> {
    fn n_params(&self) -> usize;

    /// Model value at `x`. When `grad` is given it receives `∂f/∂p`.
    fn eval(&self, x: T, params: &[T], grad: Option<&mut [T]>) -> T;

    /// Project a trial parameter vector back into the feasible region.
    fn project(&self, _params: &mut [T]) {}
}

#[derive(Clone, Copy, Debug)]
pub struct LmSettings<T> {
    pub max_iterations: usize,
    pub ftol: T,
    pub xtol: T,
}

impl<T: Real> Default for LmSettings<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            max_iterations: 200,
            ftol: T::lit(1e-10).max(eps * T::lit(10.0)),
            xtol: T::lit(1e-13).max(eps * T::lit(10.0)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmReport<T> {
    pub params: Vec<T>,
    pub chi2: T,
    pub initial_chi2: T,
    /// `JᵀWJ` at the final parameters, row-major.
    pub normal_matrix: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

struct Linearization<T> {
    chi2: T,
    jtj: Vec<T>,
    jtr: Vec<T>,
}

fn chi2<T: Real, M: CurveModel<T>>(model: &M, xs: &[T], ys: &[T], ws: &[T], p: &[T]) -> T {
    xs.iter()
        .zip(ys)
        .zip(ws)
        .map(|((&x, &y), &w)| {
            let r = y - model.eval(x, p, None);
            w * r * r
        })
        .sum()
}

fn linearize<T: Real, M: CurveModel<T>>(
    model: &M,
    xs: &[T],
    ys: &[T],
    ws: &[T],
    p: &[T],
) -> Linearization<T> {
    let n = model.n_params();
    let mut jtj = vec![T::zero(); n * n];
    let mut jtr = vec![T::zero(); n];
    let mut grad = vec![T::zero(); n];
    let mut total = T::zero();
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        let f = model.eval(x, p, Some(&mut grad));
        let r = y - f;
        total = total + w * r * r;
        for i in 0..n {
            let wg = w * grad[i];
            jtr[i] = jtr[i] + wg * r;
            for j in 0..=i {
                jtj[i * n + j] = jtj[i * n + j] + wg * grad[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            jtj[j * n + i] = jtj[i * n + j];
        }
    }
    Linearization {
        chi2: total,
        jtj,
        jtr,
    }
}

pub fn levenberg_marquardt<T: Real, M: CurveModel<T>>(
    model: &M,
    xs: &[T],
    ys: &[T],
    weights: &[T],
    initial: Vec<T>,
    settings: &LmSettings<T>,
) -> LmReport<T> {
    let n = model.n_params();
    assert_eq!(initial.len(), n, "initial guess has wrong length");
    assert!(xs.len() == ys.len() && ys.len() == weights.len());

    let mut p = initial;
    let mut lin = linearize(model, xs, ys, weights, &p);
    let initial_chi2 = lin.chi2;
    let mut lambda = T::lit(1e-3);
    let lambda_max = T::lit(1e16);
    let lambda_min = T::lit(1e-12);
    let mut iterations = 0;
    let mut converged = false;

    if lin.chi2.is_finite() {
        loop {
            if lin.chi2 == T::zero() {
                converged = true;
                break;
            }
            if iterations >= settings.max_iterations {
                break;
            }
            iterations += 1;

            let max_diag = (0..n)
                .map(|i| lin.jtj[i * n + i])
                .fold(T::zero(), |a, b| a.max(b));
            let floor = (max_diag * T::epsilon()).max(T::min_positive_value());

            let mut step = None;
            while lambda <= lambda_max {
                let mut a = lin.jtj.clone();
                for i in 0..n {
                    a[i * n + i] = a[i * n + i] + lambda * lin.jtj[i * n + i].max(floor);
                }
                if let Some(delta) = spd_solve(&a, n, &lin.jtr) {
                    let mut trial: Vec<T> =
                        p.iter().zip(&delta).map(|(&pi, &di)| pi + di).collect();
                    model.project(&mut trial);
                    let delta: Vec<T> = trial.iter().zip(&p).map(|(&ti, &pi)| ti - pi).collect();
                    let trial_chi2 = chi2(model, xs, ys, weights, &trial);
                    if trial_chi2.is_finite() && trial_chi2 < lin.chi2 {
                        step = Some((trial, delta, trial_chi2));
                        break;
                    }
                }
                lambda = lambda * T::lit(4.0);
            }

            let Some((trial, delta, trial_chi2)) = step else {
                converged = true;
                break;
            };
            let rel_decrease = (lin.chi2 - trial_chi2) / lin.chi2;
            let step_norm = delta.iter().map(|&d| d * d).sum::<T>().sqrt();
            let param_norm = trial.iter().map(|&v| v * v).sum::<T>().sqrt();
            p = trial;
            lin = linearize(model, xs, ys, weights, &p);
            lambda = (lambda / T::lit(10.0)).max(lambda_min);
            if rel_decrease < settings.ftol
                || step_norm <= settings.xtol * (param_norm + settings.xtol)
            {
                converged = true;
                break;
            }
        }
    }

    LmReport {
        params: p,
        chi2: lin.chi2,
        initial_chi2,
        normal_matrix: lin.jtj,
        iterations,
        converged,
    }
}
