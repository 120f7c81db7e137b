//! Small dense symmetric positive-definite solves for the normal equations.
//! Matrices are row-major `n × n` slices.

use crate::scalar::Real;

/// In-place Cholesky factorization `A = L·Lᵀ`; the lower triangle of `a`
/// receives `L`. Returns `false` if `A` is not numerically positive definite.
fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

fn substitute<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Symmetric diagonal equilibration `S·A·S` with `S = diag(A)^(-1/2)`.
fn equilibrate<T: Real>(a: &[T], n: usize) -> Option<(Vec<T>, Vec<T>)> {
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = a[i * n + i];
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        scale.push(T::one() / d.sqrt());
    }
    let mut scaled = a.to_vec();
    for i in 0..n {
        for j in 0..n {
            scaled[i * n + j] = a[i * n + j] * scale[i] * scale[j];
        }
    }
    Some((scaled, scale))
}

/// Solve `A·x = b` for symmetric positive-definite `A`.
pub(crate) fn spd_solve<T: Real>(a: &[T], n: usize, b: &[T]) -> Option<Vec<T>> {
    let (mut l, scale) = equilibrate(a, n)?;
    if !cholesky_in_place(&mut l, n) {
        return None;
    }
    let mut x: Vec<T> = b.iter().zip(&scale).map(|(&bi, &s)| bi * s).collect();
    substitute(&l, n, &mut x);
    for (xi, &s) in x.iter_mut().zip(&scale) {
        *xi = *xi * s;
    }
    Some(x)
}

/// Inverse of a symmetric positive-definite matrix.
pub(crate) fn spd_inverse<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let (mut l, scale) = equilibrate(a, n)?;
    if !cholesky_in_place(&mut l, n) {
        return None;
    }
    let mut inv = vec![T::zero(); n * n];
    let mut col = vec![T::zero(); n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = T::zero());
        col[j] = T::one();
        substitute(&l, n, &mut col);
        for i in 0..n {
            inv[i * n + j] = col[i] * scale[i] * scale[j];
        }
    }
    // Symmetrize away rounding asymmetry.
    for i in 0..n {
        for j in i + 1..n {
            let m = (inv[i * n + j] + inv[j * n + i]) / T::lit(2.0);
            inv[i * n + j] = m;
            inv[j * n + i] = m;
        }
    }
    Some(inv)
}
