//! Variable-projection pre-fit. Both spectral models are a constant plus a
//! linear combination of Lorentzian templates, so for fixed centers and
//! widths the amplitudes have a closed-form weighted least-squares solution.
//! Optimizing only the centers and widths of this profiled objective has a
//! much wider basin of attraction than the full parameterization, which can
//! collapse a misplaced line to zero amplitude.

use super::linalg::spd_solve;
use crate::scalar::Real;
use crate::spectral::lorentzian_with_derivs;

/// Profiled fit of `a₀ + Σ a_k·L(x; c_k, w_k)`.
pub(crate) struct Profiled<'a, T> {
    pub xs: &'a [T],
    pub ys: &'a [T],
    pub ws: &'a [T],
}

struct Eval<T> {
    coeffs: Vec<T>,
    /// Weighted design matrix `√w·Φ`, row-major `m × (k+1)`.
    design: Vec<T>,
    /// `∂L_k/∂c_k, ∂L_k/∂w_k` per row, row-major `m × 2k`.
    derivs: Vec<T>,
    gram: Vec<T>,
    residuals: Vec<T>,
    cost: T,
}

impl<T: Real> Profiled<'_, T> {
    fn evaluate(&self, nonlinear: &[T]) -> Option<Eval<T>> {
        self.evaluate_with(nonlinear, true)
    }

    fn evaluate_with(&self, nonlinear: &[T], with_derivs: bool) -> Option<Eval<T>> {
        let k = nonlinear.len() / 2;
        let n = k + 1;
        let m = self.xs.len();
        let mut design = vec![T::zero(); m * n];
        let mut derivs = vec![T::zero(); if with_derivs { m * 2 * k } else { 0 }];
        let mut gram = vec![T::zero(); n * n];
        let mut rhs = vec![T::zero(); n];
        for (i, ((&x, &y), &w)) in self.xs.iter().zip(self.ys).zip(self.ws).enumerate() {
            let sw = w.sqrt();
            let row = &mut design[i * n..(i + 1) * n];
            row[0] = sw;
            for j in 0..k {
                let (l, dc, dw) = lorentzian_with_derivs(x, nonlinear[2 * j], nonlinear[2 * j + 1]);
                row[j + 1] = sw * l;
                if with_derivs {
                    derivs[i * 2 * k + 2 * j] = dc;
                    derivs[i * 2 * k + 2 * j + 1] = dw;
                }
            }
            for a in 0..n {
                rhs[a] = rhs[a] + row[a] * sw * y;
                for b in 0..n {
                    gram[a * n + b] = gram[a * n + b] + row[a] * row[b];
                }
            }
        }
        let coeffs = spd_solve(&gram, n, &rhs)?;
        let residuals: Vec<T> = (0..m)
            .map(|i| {
                let row = &design[i * n..(i + 1) * n];
                let fit: T = row.iter().zip(&coeffs).map(|(&r, &c)| r * c).sum();
                self.ws[i].sqrt() * self.ys[i] - fit
            })
            .collect();
        let cost = residuals.iter().map(|&r| r * r).sum();
        Some(Eval {
            coeffs,
            design,
            derivs,
            gram,
            residuals,
            cost,
        })
    }

    /// Optimal linear coefficients `[a₀, a_1, …]` and weighted chi-square for
    /// the nonlinear parameters `[c_1, w_1, c_2, w_2, …]`.
    pub fn solve_linear(&self, nonlinear: &[T]) -> Option<(Vec<T>, T)> {
        self.evaluate_with(nonlinear, false)
            .map(|e| (e.coeffs, e.cost))
    }

    /// Kaufman's approximation to the profiled Jacobian: the model
    /// derivative at fixed amplitudes, projected off the column space of the
    /// design matrix.
    fn jacobian(&self, e: &Eval<T>, n_nonlinear: usize) -> Option<Vec<T>> {
        let k = n_nonlinear / 2;
        let n = k + 1;
        let m = self.xs.len();
        let mut jac = vec![T::zero(); m * n_nonlinear];
        let mut col = vec![T::zero(); m];
        for p in 0..n_nonlinear {
            let line = p / 2;
            let mut proj = vec![T::zero(); n];
            for i in 0..m {
                col[i] = self.ws[i].sqrt() * e.coeffs[line + 1] * e.derivs[i * 2 * k + p];
                for a in 0..n {
                    proj[a] = proj[a] + e.design[i * n + a] * col[i];
                }
            }
            let s = spd_solve(&e.gram, n, &proj)?;
            for i in 0..m {
                let back: T = (0..n).map(|a| e.design[i * n + a] * s[a]).sum();
                jac[i * n_nonlinear + p] = col[i] - back;
            }
        }
        Some(jac)
    }

    /// Levenberg-Marquardt on the profiled residuals. Stops once an
    /// accepted step improves the cost by less than 1e-6 relative: this is
    /// only a starting point for the full fit. Returns `None` if the start
    /// is already degenerate.
    pub fn refine(&self, start: &[T], max_iterations: usize) -> Option<Vec<T>> {
        let n = start.len();
        let mut p = start.to_vec();
        let mut current = self.evaluate(&p)?;
        let mut lambda = T::lit(1e-3);
        let m = self.xs.len();
        let floor = T::min_positive_value();
        // A line wider than the scanned range is just more baseline.
        let (lo, hi) = self
            .xs
            .iter()
            .fold((self.xs[0], self.xs[0]), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let span = hi - lo;
        let in_range = |t: &Vec<T>| (0..n / 2).all(|j| t[2 * j + 1].abs() <= span);

        for _ in 0..max_iterations {
            let Some(jac) = self.jacobian(&current, n) else {
                break;
            };
            let mut jtj = vec![T::zero(); n * n];
            let mut jtr = vec![T::zero(); n];
            for row in 0..m {
                let r = current.residuals[row];
                for i in 0..n {
                    let ji = jac[row * n + i];
                    jtr[i] = jtr[i] + ji * r;
                    for j in 0..n {
                        jtj[i * n + j] = jtj[i * n + j] + ji * jac[row * n + j];
                    }
                }
            }
            let mut improved = false;
            while lambda <= T::lit(1e12) {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[i * n + i] = a[i * n + i] + lambda * jtj[i * n + i].max(floor);
                }
                let trial = spd_solve(&a, n, &jtr)
                    .map(|delta| {
                        p.iter()
                            .zip(&delta)
                            .map(|(&a, &d)| a + d)
                            .collect::<Vec<T>>()
                    })
                    .filter(in_range);
                if let Some(e) = trial.as_ref().and_then(|t| self.evaluate(t)) {
                    if e.cost.is_finite() && e.cost < current.cost {
                        let rel = (current.cost - e.cost) / current.cost;
                        p = trial.expect("evaluated");
                        current = e;
                        lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                        improved = rel > T::lit(1e-6);
                        break;
                    }
                }
                lambda = lambda * T::lit(4.0);
            }
            if !improved {
                break;
            }
        }
        for j in 0..n / 2 {
            p[2 * j + 1] = p[2 * j + 1].abs();
        }
        Some(p)
    }
}
