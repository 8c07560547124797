//! Boundary profiles `eta(x1, y)`, their envelopes and fiber measures.

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::numeric::{bisect, golden_max};
use crate::scalar::Real;

/// Built-in profile families. All are strictly positive, 1-periodic in `y`
/// and have a single bump per period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileFamily {
    /// `eta = c`; params `[c]`.
    Constant,
    /// `eta = base + amp * sin^2(pi (y - phase))`; params `[base, amp]` or `[base, amp, phase]`.
    SineBump,
    /// `eta = (a0 + a1 x1) * (base + amp * sin^2(pi (y - phase)))`;
    /// params `[a0, a1, base, amp]` or `[a0, a1, base, amp, phase]`.
    Product,
    /// Bilinear table: params `[rows, v_00, .., v_0(m-1), v_10, ..]`. Row `r` sits at
    /// `x1 = r / (rows - 1)` (a single row is `x1`-independent); column `j` at `y = j / m`.
    Tabulated,
}

const CHECK_X1_SAMPLES: usize = 33;
const PERIODICITY_TOL: f64 = 1e-12;
const EXTREMUM_TOL: f64 = 1e-10;
const FIBER_TOL: f64 = 1e-10;
const DOMAIN_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct EtaProfile<T> {
    family: ProfileFamily,
    params: Vec<T>,
    y_samples: usize,
    lipschitz_bound: T,
    eta_min: T,
}

/// Location and value of the extrema of `eta(x1, .)` on the torus.
#[derive(Clone, Copy, Debug)]
pub struct Extrema<T> {
    pub y_min: T,
    pub eta_minus: T,
    pub y_max: T,
    pub eta_plus: T,
}

impl<T: Real> EtaProfile<T> {
    /// Validates the family parameters and the sampled invariants (positivity,
    /// periodicity, Lipschitz bound, single bump per period).
    ///
    /// When `lipschitz_bound` is `None` the sampled difference-quotient maximum is stored.
    pub fn new(
        family: ProfileFamily,
        params: Vec<T>,
        y_samples: usize,
        lipschitz_bound: Option<T>,
    ) -> Result<Self, GeometryError> {
        if y_samples < 64 {
            return Err(GeometryError::InvalidProfile(format!(
                "y_samples must be >= 64, got {y_samples}"
            )));
        }
        check_param_shape(family, &params)?;
        let mut profile = EtaProfile {
            family,
            params,
            y_samples,
            lipschitz_bound: T::infinity(),
            eta_min: T::zero(),
        };
        let sampled = profile.validate_samples()?;
        profile.lipschitz_bound = match lipschitz_bound {
            Some(l) if !(l > T::zero()) => {
                return Err(GeometryError::InvalidProfile(format!(
                    "lipschitz_bound must be > 0, got {l}"
                )))
            }
            Some(l) => {
                if sampled.max_quotient > l * T::lit(1.05) {
                    return Err(GeometryError::InvalidProfile(format!(
                        "sampled difference quotient {} exceeds declared Lipschitz bound {l}",
                        sampled.max_quotient
                    )));
                }
                l
            }
            None => sampled.max_quotient.max(T::epsilon()),
        };
        profile.eta_min = sampled.eta_min;
        Ok(profile)
    }

    /// `eta = c`.
    pub fn constant(c: T) -> Result<Self, GeometryError> {
        Self::new(ProfileFamily::Constant, vec![c], 64, None)
    }

    /// `eta = base + amp * sin^2(pi y)`.
    pub fn sine_bump(base: T, amp: T) -> Result<Self, GeometryError> {
        Self::new(ProfileFamily::SineBump, vec![base, amp], 256, None)
    }

    /// Tabulated copy sampled at `x1 = r / (rows - 1)` and `y = j / cols`, i.e. the
    /// periodic P1 interpolant in `y` (bilinear when `rows > 1`).
    pub fn tabulate(&self, rows: usize, cols: usize) -> Result<Self, GeometryError> {
        if rows == 0 || cols < 2 {
            return Err(GeometryError::InvalidProfile(format!(
                "tabulation needs rows >= 1 and cols >= 2, got {rows} x {cols}"
            )));
        }
        let mut params = vec![T::from_count(rows)];
        for r in 0..rows {
            let x1 = if rows == 1 { T::zero() } else { T::from_count(r) / T::from_count(rows - 1) };
            params.extend((0..cols).map(|j| self.eval(x1, T::from_count(j) / T::from_count(cols))));
        }
        Self::new(ProfileFamily::Tabulated, params, self.y_samples.max(4 * cols), None)
    }

    pub fn family(&self) -> ProfileFamily {
        self.family
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn y_samples(&self) -> usize {
        self.y_samples
    }

    pub fn lipschitz_bound(&self) -> T {
        self.lipschitz_bound
    }

    /// Smallest sampled value of `eta` (strictly positive).
    pub fn eta_min(&self) -> T {
        self.eta_min
    }

    /// True when `eta` does not depend on `x1`.
    pub fn is_x1_independent(&self) -> bool {
        match self.family {
            ProfileFamily::Constant | ProfileFamily::SineBump => true,
            ProfileFamily::Product => self.params[1] == T::zero(),
            ProfileFamily::Tabulated => self.params[0] == T::one(),
        }
    }

    /// `eta(x1, y)`; `y` is read modulo 1.
    pub fn eval(&self, x1: T, y: T) -> T {
        let p = &self.params;
        let bump = |base: T, amp: T, phase: T| {
            let s = (T::PI() * (y - phase)).sin();
            base + amp * s * s
        };
        match self.family {
            ProfileFamily::Constant => p[0],
            ProfileFamily::SineBump => bump(p[0], p[1], p.get(2).copied().unwrap_or_else(T::zero)),
            ProfileFamily::Product => {
                (p[0] + p[1] * x1) * bump(p[2], p[3], p.get(4).copied().unwrap_or_else(T::zero))
            }
            ProfileFamily::Tabulated => self.eval_table(x1, y),
        }
    }

    fn eval_table(&self, x1: T, y: T) -> T {
        let rows = self.params[0].to_usize().unwrap_or(1);
        let table = &self.params[1..];
        let m = table.len() / rows;
        let yw = y - y.floor();
        let sy = yw * T::from_count(m);
        let j0 = sy.floor().to_usize().unwrap_or(0).min(m - 1);
        let ty = sy - T::from_count(j0);
        let j1 = (j0 + 1) % m;
        let row_val = |r: usize| {
            let base = r * m;
            table[base + j0] * (T::one() - ty) + table[base + j1] * ty
        };
        if rows == 1 {
            return row_val(0);
        }
        let sx = x1.max(T::zero()).min(T::one()) * T::from_count(rows - 1);
        let r0 = sx.floor().to_usize().unwrap_or(0).min(rows - 2);
        let tx = sx - T::from_count(r0);
        row_val(r0) * (T::one() - tx) + row_val(r0 + 1) * tx
    }

    /// Minimum and maximum of `eta(x1, .)` with their locations, by dense sampling
    /// followed by golden-section refinement around the best sample.
    pub fn extrema(&self, x1: T) -> Extrema<T> {
        let n = self.y_samples;
        let step = T::one() / T::from_count(n);
        let (mut jmin, mut jmax) = (0, 0);
        let (mut vmin, mut vmax) = (T::infinity(), T::neg_infinity());
        for j in 0..n {
            let v = self.eval(x1, T::from_count(j) * step);
            if v < vmin {
                vmin = v;
                jmin = j;
            }
            if v > vmax {
                vmax = v;
                jmax = j;
            }
        }
        let tol = T::tol(EXTREMUM_TOL);
        let refine = |j: usize, sign: T, sampled: T| {
            let c = T::from_count(j) * step;
            let (y, v) = golden_max(|y| sign * self.eval(x1, y), c - step, c + step, tol);
            let v = sign * v;
            if sign * v >= sign * sampled {
                (y - y.floor(), v)
            } else {
                (c, sampled)
            }
        };
        let (y_min, eta_minus) = refine(jmin, -T::one(), vmin);
        let (y_max, eta_plus) = refine(jmax, T::one(), vmax);
        Extrema { y_min, eta_minus, y_max, eta_plus }
    }

    /// `(eta_-(x1), eta_+(x1))`.
    pub fn envelopes(&self, x1: T) -> (T, T) {
        let e = self.extrema(x1);
        (e.eta_minus, e.eta_plus)
    }

    /// Measure of the fiber `{y in T : eta(x1, y) > x2}`, i.e. the density `h(x)`.
    pub fn fiber_measure(&self, x: [T; 2]) -> Result<T, GeometryError> {
        let e = self.extrema(x[0]);
        self.fiber_measure_with(x, &e)
    }

    /// Same as [`fiber_measure`](Self::fiber_measure) with precomputed extrema at `x[0]`.
    pub fn fiber_measure_with(&self, x: [T; 2], e: &Extrema<T>) -> Result<T, GeometryError> {
        let [x1, x2] = x;
        if x2 <= e.eta_minus {
            return Ok(T::one());
        }
        if x2 > e.eta_plus + T::tol(DOMAIN_TOL) {
            return Err(GeometryError::OutsideDomain {
                x1: x1.as_f64(),
                x2: x2.as_f64(),
                eta_plus: e.eta_plus.as_f64(),
            });
        }
        if x2 >= e.eta_plus {
            return Ok(T::zero());
        }
        // eta rises on [a, b] and falls on [b, a + 1] (single bump).
        let a = e.y_min;
        let b = if e.y_max >= a { e.y_max } else { e.y_max + T::one() };
        let c = a + T::one();
        let g = |y: T| self.eval(x1, y) - x2;
        let tol = T::tol(FIBER_TOL);
        let rise = bisect(g, a, b, tol);
        let fall = bisect(g, b, c, tol);
        Ok((fall - rise).max(T::zero()).min(T::one()))
    }

    fn validate_samples(&self) -> Result<SampleSummary<T>, GeometryError> {
        let n = self.y_samples;
        let dy = T::one() / T::from_count(n);
        let dx = T::one() / T::from_count(CHECK_X1_SAMPLES - 1);
        let mut eta_min = T::infinity();
        let mut max_quotient = T::zero();
        let mut prev_row: Option<Vec<T>> = None;
        for i in 0..CHECK_X1_SAMPLES {
            let x1 = T::from_count(i) * dx;
            let row: Vec<T> = (0..n).map(|j| self.eval(x1, T::from_count(j) * dy)).collect();
            let at_one = self.eval(x1, T::one());
            if (row[0] - at_one).abs() > T::tol(PERIODICITY_TOL) * row[0].abs().max(T::one()) {
                return Err(GeometryError::InvalidProfile(format!(
                    "eta({x1}, 0) = {} differs from eta({x1}, 1) = {at_one}",
                    row[0]
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v <= T::zero() {
                    return Err(GeometryError::InvalidProfile(format!(
                        "eta({x1}, {}) = {v} is not strictly positive",
                        T::from_count(j) * dy
                    )));
                }
                eta_min = eta_min.min(v);
                let next = row[(j + 1) % n];
                max_quotient = max_quotient.max((next - v).abs() / dy);
            }
            if let Some(prev) = &prev_row {
                for (p, v) in prev.iter().zip(&row) {
                    max_quotient = max_quotient.max((*v - *p).abs() / dx);
                }
            }
            if cyclic_sign_changes(&row) > 2 {
                return Err(GeometryError::InvalidProfile(format!(
                    "eta({x1}, .) has more than one bump per period"
                )));
            }
            prev_row = Some(row);
        }
        Ok(SampleSummary { eta_min, max_quotient })
    }
}

struct SampleSummary<T> {
    eta_min: T,
    max_quotient: T,
}

fn check_param_shape<T: Real>(family: ProfileFamily, p: &[T]) -> Result<(), GeometryError> {
    let bad = |msg: &str| Err(GeometryError::InvalidProfile(format!("{family:?}: {msg}")));
    if p.iter().any(|v| !v.is_finite()) {
        return bad("non-finite parameter");
    }
    match family {
        ProfileFamily::Constant if p.len() != 1 => bad("expected params [c]"),
        ProfileFamily::SineBump if !(2..=3).contains(&p.len()) => {
            bad("expected params [base, amp] or [base, amp, phase]")
        }
        ProfileFamily::Product if !(4..=5).contains(&p.len()) => {
            bad("expected params [a0, a1, base, amp] or [a0, a1, base, amp, phase]")
        }
        ProfileFamily::Tabulated => {
            let rows = p.first().and_then(|r| r.to_usize()).unwrap_or(0);
            if rows == 0 || p[0] != T::from_count(rows) {
                return bad("first param must be a positive integer row count");
            }
            let len = p.len() - 1;
            if len < 3 * rows || len % rows != 0 {
                return bad("table length must be rows * m with m >= 3");
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Number of sign changes of the cyclic forward differences, ignoring flat steps.
fn cyclic_sign_changes<T: Real>(row: &[T]) -> usize {
    let n = row.len();
    let scale = row.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let flat = T::tol(1e-13) * scale.max(T::one());
    let signs: Vec<bool> = (0..n)
        .filter_map(|j| {
            let d = row[(j + 1) % n] - row[j];
            if d.abs() <= flat {
                None
            } else {
                Some(d > T::zero())
            }
        })
        .collect();
    if signs.is_empty() {
        return 0;
    }
    (0..signs.len())
        .filter(|&i| signs[i] != signs[(i + 1) % signs.len()])
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine() -> EtaProfile<f64> {
        EtaProfile::sine_bump(1.0, 1.0).unwrap()
    }

    #[test]
    fn envelopes_of_sine_bump() {
        // dense sampling oracle
        let p = sine();
        let (lo, hi) = (0..10_000)
            .map(|j| p.eval(0.3, j as f64 / 10_000.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (m, mm) = p.envelopes(0.3);
        assert!((m - 1.0).abs() < 1e-10 && (lo - 1.0).abs() < 1e-7);
        assert!((mm - 2.0).abs() < 1e-10 && (hi - 2.0).abs() < 1e-7);
    }

    #[test]
    fn envelopes_of_constant_and_product() {
        let c = EtaProfile::constant(0.7).unwrap();
        assert_eq!(c.envelopes(0.9), (0.7, 0.7));
        let p = EtaProfile::<f64>::new(ProfileFamily::Product, vec![1.0, 1.0, 1.0, 1.0], 128, None).unwrap();
        let (m, mm) = p.envelopes(0.5);
        assert!((m - 1.5).abs() < 1e-10);
        assert!((mm - 3.0).abs() < 1e-10);
    }

    #[test]
    fn fiber_measure_closed_form() {
        let p = sine();
        assert_eq!(p.fiber_measure([0.5, 0.5]).unwrap(), 1.0);
        let closed = |x2: f64| 1.0 - 2.0 / std::f64::consts::PI * (x2 - 1.0).sqrt().asin();
        for x2 in [1.25, 1.5] {
            let h = p.fiber_measure([0.5, x2]).unwrap();
            assert!((h - closed(x2)).abs() < 1e-9, "{x2}: {h}");
        }
        assert!((p.fiber_measure([0.5, 1.25]).unwrap() - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn fiber_measure_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let p = sine();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| p.eval(0.5, rng.gen::<f64>()) > 1.25).count();
        let mc = hits as f64 / n as f64;
        // 5 sigma of a Bernoulli mean
        assert!((mc - p.fiber_measure([0.5, 1.25]).unwrap()).abs() < 5.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn fiber_at_top_and_outside() {
        let p = sine();
        assert_eq!(p.fiber_measure([0.2, 2.0]).unwrap(), 0.0);
        assert!(matches!(p.fiber_measure([0.2, 2.1]), Err(GeometryError::OutsideDomain { .. })));
    }

    #[test]
    fn shifted_bump_wraps() {
        let p = EtaProfile::new(ProfileFamily::SineBump, vec![1.0, 1.0, 0.3], 256, None).unwrap();
        let q = sine();
        for x2 in [1.1, 1.5, 1.9] {
            let a = p.fiber_measure([0.1, x2]).unwrap();
            let b = q.fiber_measure([0.1, x2]).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_invalid_profiles() {
        assert!(EtaProfile::constant(-1.0).is_err());
        assert!(EtaProfile::sine_bump(1.0, -2.0).is_err());
        // two bumps per period
        let two = vec![1.0, 1.0, 2.0, 1.0, 2.0, 1.0];
        let mut params = vec![1.0];
        params.extend(two);
        assert!(EtaProfile::new(ProfileFamily::Tabulated, params, 64, None).is_err());
        assert!(EtaProfile::new(ProfileFamily::SineBump, vec![1.0, 1.0], 32, None).is_err());
        // declared Lipschitz bound too small (true constant is pi)
        assert!(EtaProfile::new(ProfileFamily::SineBump, vec![1.0, 1.0], 256, Some(1.0)).is_err());
        assert!(EtaProfile::new(ProfileFamily::SineBump, vec![1.0, 1.0], 256, Some(3.2)).is_ok());
    }

    #[test]
    fn tabulated_matches_linear_interpolation() {
        let p = EtaProfile::<f64>::new(ProfileFamily::Tabulated, vec![1.0, 1.0, 2.0, 1.5, 1.2], 64, None)
            .unwrap();
        assert!((p.eval(0.4, 0.125) - 1.5).abs() < 1e-15);
        assert!((p.eval(0.4, 1.125) - 1.5).abs() < 1e-15);
        assert!((p.eval(0.4, 0.875) - 1.1).abs() < 1e-12);
        assert!((p.envelopes(0.0).1 - 2.0).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn fiber_measure_nonincreasing(x1 in 0.0..1.0f64, a in 1.0..2.0f64, b in 0.0..0.5f64) {
                let p = EtaProfile::new(ProfileFamily::Product, vec![1.0, 0.5, 1.0, 1.0, 0.2], 128, None).unwrap();
                let (lo, hi) = p.envelopes(x1);
                let t1 = lo + (hi - lo) * (a - 1.0);
                let t2 = (t1 + b * (hi - lo)).min(hi);
                let h1 = p.fiber_measure([x1, t1]).unwrap();
                let h2 = p.fiber_measure([x1, t2]).unwrap();
                prop_assert!(h2 <= h1 + 1e-9);
                prop_assert!((0.0..=1.0).contains(&h1));
            }
        }
    }

    #[test]
    fn tabulate_is_nodal_interpolant() {
        let p = sine();
        let t = p.tabulate(1, 16).unwrap();
        assert!(t.is_x1_independent());
        for j in 0..16 {
            let y = j as f64 / 16.0;
            assert!((t.eval(0.3, y) - p.eval(0.3, y)).abs() < 1e-14);
        }
        let mid = 0.5 / 16.0;
        assert!((t.eval(0.0, mid) - 0.5 * (p.eval(0.0, 0.0) + p.eval(0.0, 1.0 / 16.0))).abs() < 1e-14);
        let e = t.extrema(0.0);
        assert!((e.eta_plus - 2.0).abs() < 1e-12 && (e.eta_minus - 1.0).abs() < 1e-12);
        assert!(p.tabulate(0, 16).is_err());
    }
}
