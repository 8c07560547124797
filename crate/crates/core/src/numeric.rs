//! Small one-dimensional search helpers.

use crate::scalar::Real;

const GOLDEN_MAX_ITERS: usize = 200;
const BISECT_MAX_ITERS: usize = 400;

/// Golden-section search for the maximizer of a unimodal `f` on `[lo, hi]`.
pub(crate) fn golden_max<T: Real, F: Fn(T) -> T>(f: F, mut lo: T, mut hi: T, tol: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_MAX_ITERS {
        if hi - lo <= tol {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = (lo + hi) / T::lit(2.0);
    let fm = f(mid);
    [(c, fc), (d, fd), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Bisection for a sign change of `g` on `[lo, hi]`; `g(lo)` and `g(hi)` must differ in sign
/// (or one of them vanish). Stops once the bracket is narrower than `tol`.
pub(crate) fn bisect<T: Real, F: Fn(T) -> T>(g: F, mut lo: T, mut hi: T, tol: T) -> T {
    let mut glo = g(lo);
    if glo == T::zero() {
        return lo;
    }
    for _ in 0..BISECT_MAX_ITERS {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let gm = g(mid);
        if gm == T::zero() {
            return mid;
        }
        if (gm > T::zero()) == (glo > T::zero()) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    lo + (hi - lo) / T::lit(2.0)
}

/// Least-squares slope of `log(values)` against `log(steps)`.
pub fn loglog_slope(steps: &[f64], values: &[f64]) -> f64 {
    let n = steps.len().min(values.len()) as f64;
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_max(|x: f64| -(x - 0.3) * (x - 0.3) + 2.0, 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x: f64| x * x - 2.0, 0.0, 2.0, 1e-13);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((loglog_slope(&h, &e) - 2.0).abs() < 1e-12);
    }
}
