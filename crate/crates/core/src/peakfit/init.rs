//! Initial guesses for the Lorentzian fits. Operates on counts, returns rates.

use crate::scalar::Real;

pub(crate) fn median<T: Real>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// Median of the outer 10% of samples (5% from each end, at least one each).
pub(crate) fn outer_median<T: Real>(ys: &[T]) -> T {
    let k = (ys.len() / 20).max(1);
    let outer: Vec<T> = ys[..k].iter().chain(&ys[ys.len() - k..]).copied().collect();
    median(&outer)
}

/// Five-point boxcar, shrinking at the edges.
pub(crate) fn smooth<T: Real>(ys: &[T]) -> Vec<T> {
    let n = ys.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            ys[lo..=hi].iter().copied().sum::<T>() / T::from_usize_lossy(hi - lo + 1)
        })
        .collect()
}

fn argmin<T: Real>(ys: &[T]) -> usize {
    let mut best = 0;
    for (i, &y) in ys.iter().enumerate() {
        if y < ys[best] {
            best = i;
        }
    }
    best
}

fn argmax<T: Real>(ys: &[T]) -> usize {
    let mut best = 0;
    for (i, &y) in ys.iter().enumerate() {
        if y > ys[best] {
            best = i;
        }
    }
    best
}

/// Interpolated crossings of `level` on either side of `idx`. `inside(y)` is
/// true for samples on the feature side of the level.
fn crossings<T: Real>(
    xs: &[T],
    ys: &[T],
    idx: usize,
    level: T,
    inside: impl Fn(T) -> bool,
) -> (Option<T>, Option<T>) {
    let interp = |i: usize, j: usize| -> T {
        let (y0, y1) = (ys[i], ys[j]);
        if y1 == y0 {
            xs[j]
        } else {
            xs[i] + (xs[j] - xs[i]) * (level - y0) / (y1 - y0)
        }
    };
    let mut left = None;
    let mut j = idx;
    while j > 0 {
        if !inside(ys[j - 1]) {
            left = Some(interp(j, j - 1));
            break;
        }
        j -= 1;
    }
    let mut right = None;
    let mut j = idx;
    while j + 1 < xs.len() {
        if !inside(ys[j + 1]) {
            right = Some(interp(j, j + 1));
            break;
        }
        j += 1;
    }
    (left, right)
}

/// Full width between the crossings of `level` around `idx`. A missing
/// crossing on one side is mirrored from the other.
fn crossing_width<T: Real>(
    xs: &[T],
    ys: &[T],
    idx: usize,
    level: T,
    inside: impl Fn(T) -> bool,
) -> Option<T> {
    let two = T::lit(2.0);
    match crossings(xs, ys, idx, level, inside) {
        (Some(l), Some(r)) => Some(r - l),
        (Some(l), None) => Some(two * (xs[idx] - l)),
        (None, Some(r)) => Some(two * (r - xs[idx])),
        (None, None) => None,
    }
}

fn span<T: Real>(xs: &[T]) -> T {
    xs[xs.len() - 1] - xs[0]
}

fn min_spacing<T: Real>(xs: &[T]) -> T {
    xs.windows(2)
        .map(|w| w[1] - w[0])
        .fold(T::infinity(), |a, b| a.min(b))
}

/// `[center, fwhm, amplitude, background]` for a single emission peak.
pub(crate) fn peak_guess<T: Real>(xs: &[T], counts: &[T], exposure: T) -> [T; 4] {
    let background = outer_median(counts);
    let s = smooth(counts);
    let i = argmax(&s);
    let floor = T::lit(1e-3) * background.max(T::one());
    let height = (s[i] - background).max(floor);
    let level = background + height / T::lit(2.0);
    let fwhm = crossing_width(xs, &s, i, level, |y| y > level)
        .filter(|w| *w > T::zero())
        .unwrap_or_else(|| span(xs) / T::lit(4.0))
        .max(min_spacing(xs));
    [xs[i], fwhm, height / exposure, background / exposure]
}

/// `[baseline, center, fwhm, contrast]` for a single dip.
pub(crate) fn dip_guess<T: Real>(xs: &[T], counts: &[T], exposure: T) -> [T; 4] {
    let baseline = outer_median(counts).max(T::min_positive_value());
    let s = smooth(counts);
    let i = argmin(&s);
    let contrast = ((baseline - s[i]) / baseline)
        .max(T::lit(1e-3))
        .min(T::lit(0.9));
    let level = baseline * (T::one() - contrast / T::lit(2.0));
    let fwhm = crossing_width(xs, &s, i, level, |y| y < level)
        .filter(|w| *w > T::zero())
        .unwrap_or_else(|| span(xs) / T::lit(4.0))
        .max(min_spacing(xs));
    [baseline / exposure, xs[i], fwhm, contrast]
}

/// Candidate starting points `[R, c1, w1, C1, c2, w2, C2]` for a dip pair:
/// the two deepest local minima at least one nominal linewidth apart (when
/// present), and a symmetric split of the single-dip guess.
pub(crate) fn dip_pair_guesses<T: Real>(xs: &[T], counts: &[T], exposure: T) -> Vec<[T; 7]> {
    let [rate, c, w, contrast] = dip_guess(xs, counts, exposure);
    let baseline = rate * exposure;
    let s = smooth(counts);
    let mut guesses = Vec::with_capacity(2);

    let mut minima: Vec<usize> = (1..s.len().saturating_sub(1))
        .filter(|&i| s[i] <= s[i - 1] && s[i] < s[i + 1])
        .collect();
    minima.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(std::cmp::Ordering::Equal));
    let first = argmin(&s);
    if let Some(&second) = minima.iter().find(|&&i| (xs[i] - xs[first]).abs() >= w) {
        let depth = |i: usize| {
            ((baseline - s[i]) / baseline)
                .max(T::lit(1e-3))
                .min(T::lit(0.45))
        };
        let (a, b) = if xs[first] < xs[second] {
            (first, second)
        } else {
            (second, first)
        };
        let gap = (xs[b] - xs[a]).abs();
        let width = w.min(gap);
        guesses.push([rate, xs[a], width, depth(a), xs[b], width, depth(b)]);
    }

    // Split around the middle of the blended feature rather than its deepest
    // sample, which sits on one of the two lines when they are resolved.
    let first_level = baseline * (T::one() - contrast / T::lit(2.0));
    let c = match crossings(xs, &s, first, first_level, |y| y < first_level) {
        (Some(l), Some(r)) => (l + r) / T::lit(2.0),
        _ => c,
    };
    let quarter = w / T::lit(4.0);
    let half_contrast = (contrast * T::lit(0.6)).min(T::lit(0.45));
    let narrow = (w * T::lit(0.7)).max(min_spacing(xs));
    guesses.push([
        rate,
        c - quarter,
        narrow,
        half_contrast,
        c + quarter,
        narrow,
        half_contrast,
    ]);
    guesses
}
