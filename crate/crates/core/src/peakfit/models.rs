//! Lorentzian curve models in the `CurveModel` form used by the optimizer.
//! Both take the axis already shifted to a local origin, so centers are
//! offsets from that origin.

use super::lm::CurveModel;
use crate::scalar::Real;
use crate::spectral::lorentzian_with_derivs;

/// `t·(background + amplitude·L(x; center, fwhm))`, parameters
/// `[center, fwhm, amplitude, background]` with rates in counts/s.
#[derive(Clone, Copy, Debug)]
pub struct PeakModel<T> {
    pub exposure_s: T,
}

impl<T: Real> CurveModel<T> for PeakModel<T> {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: T, p: &[T], grad: Option<&mut [T]>) -> T {
        let t = self.exposure_s;
        let (l, dl_dc, dl_dw) = lorentzian_with_derivs(x, p[0], p[1]);
        if let Some(g) = grad {
            g[0] = t * p[2] * dl_dc;
            g[1] = t * p[2] * dl_dw;
            g[2] = t * l;
            g[3] = t;
        }
        t * (p[3] + p[2] * l)
    }

    fn project(&self, p: &mut [T]) {
        p[2] = p[2].max(T::min_positive_value());
    }
}

/// `t·R·(1 − Σ C_k·L(x; c_k, w_k))`, parameters
/// `[R, c_1, w_1, C_1, c_2, w_2, C_2, …]`.
#[derive(Clone, Copy, Debug)]
pub struct DipsModel<T> {
    pub exposure_s: T,
    pub n_dips: usize,
}

impl<T: Real> CurveModel<T> for DipsModel<T> {
    fn n_params(&self) -> usize {
        1 + 3 * self.n_dips
    }

    fn eval(&self, x: T, p: &[T], mut grad: Option<&mut [T]>) -> T {
        let t = self.exposure_s;
        let rate = p[0];
        let mut depth = T::zero();
        for k in 0..self.n_dips {
            let (c, w, contrast) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
            let (l, dl_dc, dl_dw) = lorentzian_with_derivs(x, c, w);
            depth = depth + contrast * l;
            if let Some(g) = grad.as_deref_mut() {
                g[1 + 3 * k] = -t * rate * contrast * dl_dc;
                g[2 + 3 * k] = -t * rate * contrast * dl_dw;
                g[3 + 3 * k] = -t * rate * l;
            }
        }
        if let Some(g) = grad {
            g[0] = t * (T::one() - depth);
        }
        t * rate * (T::one() - depth)
    }

    fn project(&self, p: &mut [T]) {
        let floor = T::lit(1e-9);
        for k in 0..self.n_dips {
            p[3 + 3 * k] = p[3 + 3 * k].max(floor).min(T::one() - floor);
        }
    }
}
