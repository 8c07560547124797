//! Monotone operators `A(x, xi)`, their hypothesis audit and the effective
//! vertical flux of the limit problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::bisect;
use crate::scalar::{dot, norm, Point, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error(
        "hypothesis violation ({hypothesis}) at x = {x:?}, xi = {xi:?}, xi' = {xi_prime:?}: {detail}"
    )]
    HypothesisViolation {
        hypothesis: &'static str,
        x: [f64; 2],
        xi: [f64; 2],
        xi_prime: [f64; 2],
        detail: String,
    },
    #[error("no sign change of A_1(x, (q, {d})) for |q| <= {limit} at x = {x:?}")]
    BracketFailure { x: [f64; 2], d: f64, limit: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorFamily {
    /// `A = alpha(x) M xi` with `M` symmetric.
    LinearMatrix,
    /// `A = alpha(x) rho(|xi|) xi/|xi|`, `rho(s) = s + s/(1+s)`.
    RadialRegularized,
    /// `A = alpha(x) rho(|xi|) xi/|xi|`, `rho(s) = s + atan(s)`.
    RadialAtan,
}

/// Positive spatial coefficient multiplying the operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha<T> {
    Constant(T),
    /// `base + slope_x1 * x1 + slope_x2 * x2`.
    Affine { base: T, slope_x1: T, slope_x2: T },
}

impl<T: Real> Alpha<T> {
    pub fn eval(&self, x: Point<T>) -> T {
        match *self {
            Alpha::Constant(v) => v,
            Alpha::Affine { base, slope_x1, slope_x2 } => base + slope_x1 * x[0] + slope_x2 * x[1],
        }
    }

    /// `(min, max)` over an axis-aligned box (attained at corners).
    pub fn bounds(&self, bx: &DomainBox<T>) -> (T, T) {
        let corners = [
            [bx.x1.0, bx.x2.0],
            [bx.x1.1, bx.x2.0],
            [bx.x1.0, bx.x2.1],
            [bx.x1.1, bx.x2.1],
        ];
        corners.iter().map(|c| self.eval(*c)).fold((T::infinity(), T::neg_infinity()), |(a, b), v| {
            (a.min(v), b.max(v))
        })
    }
}

/// Rectangle `[x1.0, x1.1] x [x2.0, x2.1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainBox<T> {
    pub x1: (T, T),
    pub x2: (T, T),
}

impl<T: Real> DomainBox<T> {
    pub fn new(x1: (T, T), x2: (T, T)) -> Self {
        DomainBox { x1, x2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSpec<T> {
    family: OperatorFamily,
    matrix: [[T; 2]; 2],
    alpha: Alpha<T>,
    k_const: T,
}

const BRACKET_LIMIT: f64 = 1e6;
const ROOT_TOL: f64 = 1e-12;
const NEWTON_POLISH_STEPS: usize = 5;

/// Central-difference step relative to `1 + |arg|`.
pub(crate) fn fd_step<T: Real>() -> T {
    if T::epsilon() < T::lit(1e-12) {
        T::lit(1e-6)
    } else {
        T::epsilon().cbrt()
    }
}

impl<T: Real> OperatorSpec<T> {
    pub fn new(
        family: OperatorFamily,
        matrix: Option<[[T; 2]; 2]>,
        alpha: Alpha<T>,
        k_const: T,
    ) -> Result<Self, OperatorError> {
        let matrix = match (family, matrix) {
            (OperatorFamily::LinearMatrix, None) => {
                return Err(OperatorError::InvalidOperator("linear_matrix needs a matrix".into()))
            }
            (OperatorFamily::LinearMatrix, Some(m)) => {
                if m.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(OperatorError::InvalidOperator("non-finite matrix entry".into()));
                }
                if (m[0][1] - m[1][0]).abs() > T::tol(1e-14) * (m[0][1].abs() + m[1][0].abs()) {
                    return Err(OperatorError::InvalidOperator(format!(
                        "matrix must be symmetric, got off-diagonal {} and {}",
                        m[0][1], m[1][0]
                    )));
                }
                m
            }
            (_, _) => [[T::one(), T::zero()], [T::zero(), T::one()]],
        };
        if !(k_const >= T::zero()) {
            return Err(OperatorError::InvalidOperator(format!("k_const must be >= 0, got {k_const}")));
        }
        if let Alpha::Constant(v) = alpha {
            if !(v > T::zero()) {
                return Err(OperatorError::InvalidOperator(format!("alpha must be > 0, got {v}")));
            }
        }
        Ok(OperatorSpec { family, matrix, alpha, k_const })
    }

    pub fn linear(matrix: [[T; 2]; 2]) -> Result<Self, OperatorError> {
        Self::new(OperatorFamily::LinearMatrix, Some(matrix), Alpha::Constant(T::one()), T::zero())
    }

    pub fn identity() -> Self {
        Self::linear([[T::one(), T::zero()], [T::zero(), T::one()]]).expect("identity is valid")
    }

    pub fn radial_regularized() -> Self {
        Self::new(OperatorFamily::RadialRegularized, None, Alpha::Constant(T::one()), T::zero())
            .expect("valid")
    }

    pub fn radial_atan() -> Self {
        Self::new(OperatorFamily::RadialAtan, None, Alpha::Constant(T::one()), T::zero())
            .expect("valid")
    }

    pub fn family(&self) -> OperatorFamily {
        self.family
    }

    pub fn alpha(&self) -> &Alpha<T> {
        &self.alpha
    }

    pub fn matrix(&self) -> [[T; 2]; 2] {
        self.matrix
    }

    pub fn k_const(&self) -> T {
        self.k_const
    }

    pub fn is_linear(&self) -> bool {
        self.family == OperatorFamily::LinearMatrix
    }

    pub fn is_radial(&self) -> bool {
        !self.is_linear()
    }

    /// Radial profile `rho(s)`.
    pub fn rho(&self, s: T) -> T {
        s * self.rho_over_s(s)
    }

    /// `rho(s) / s`, continuous at `s = 0`.
    pub fn rho_over_s(&self, s: T) -> T {
        match self.family {
            OperatorFamily::RadialRegularized => T::one() + T::one() / (T::one() + s),
            OperatorFamily::RadialAtan => {
                if s < T::lit(1e-4) {
                    let s2 = s * s;
                    T::lit(2.0) - s2 / T::lit(3.0) + s2 * s2 / T::lit(5.0)
                } else {
                    T::one() + s.atan() / s
                }
            }
            OperatorFamily::LinearMatrix => T::one(),
        }
    }

    pub fn evaluate(&self, x: Point<T>, xi: [T; 2]) -> [T; 2] {
        let a = self.alpha.eval(x);
        match self.family {
            OperatorFamily::LinearMatrix => {
                let m = &self.matrix;
                [a * (m[0][0] * xi[0] + m[0][1] * xi[1]), a * (m[1][0] * xi[0] + m[1][1] * xi[1])]
            }
            _ => {
                let c = a * self.rho_over_s(norm(xi));
                [c * xi[0], c * xi[1]]
            }
        }
    }

    /// Symmetrized central-difference Jacobian `dA/dxi` (exact for the linear family).
    pub fn jacobian(&self, x: Point<T>, xi: [T; 2]) -> [[T; 2]; 2] {
        if self.is_linear() {
            let a = self.alpha.eval(x);
            let m = &self.matrix;
            return [[a * m[0][0], a * m[0][1]], [a * m[1][0], a * m[1][1]]];
        }
        let h = fd_step::<T>() * (T::one() + norm(xi));
        let two_h = h + h;
        let mut j = [[T::zero(); 2]; 2];
        for c in 0..2 {
            let mut p = xi;
            let mut m = xi;
            p[c] += h;
            m[c] -= h;
            let (ap, am) = (self.evaluate(x, p), self.evaluate(x, m));
            j[0][c] = (ap[0] - am[0]) / two_h;
            j[1][c] = (ap[1] - am[1]) / two_h;
        }
        let off = (j[0][1] + j[1][0]) / T::lit(2.0);
        j[0][1] = off;
        j[1][0] = off;
        j
    }

    /// Secant matrix `S` with `A(x, xi) = S xi`, used by the Picard (frozen coefficient) step.
    pub fn secant(&self, x: Point<T>, xi: [T; 2]) -> [[T; 2]; 2] {
        if self.is_linear() {
            return self.jacobian(x, xi);
        }
        let c = self.alpha.eval(x) * self.rho_over_s(norm(xi));
        [[c, T::zero()], [T::zero(), c]]
    }

    /// Analytic `(c0, c1)` over a box: coercivity and linear-growth constants.
    pub fn analytic_constants(&self, bx: &DomainBox<T>) -> (T, T) {
        let (amin, amax) = self.alpha.bounds(bx);
        match self.family {
            OperatorFamily::LinearMatrix => {
                let (lmin, lmax) = sym_eigenvalues(self.matrix);
                (amin * lmin, amax * lmax.abs().max(lmin.abs()))
            }
            _ => (amin, amax * T::lit(2.0)),
        }
    }

    /// `A_1(x, (q, d))`.
    pub fn a1(&self, x: Point<T>, q: T, d: T) -> T {
        self.evaluate(x, [q, d])[0]
    }

    /// Unique `q` with `A_1(x, (q, d)) = 0`: bracket expansion, bisection, then at most
    /// five Newton steps with a finite-difference slope.
    pub fn solve_a1_root(&self, x: Point<T>, d: T) -> Result<T, OperatorError> {
        let g = |q: T| self.a1(x, q, d);
        let limit = T::lit(BRACKET_LIMIT) * (T::one() + d.abs());
        let mut w = T::one().max(d.abs());
        let (lo, hi) = loop {
            let (glo, ghi) = (g(-w), g(w));
            if glo <= T::zero() && ghi >= T::zero() {
                break (-w, w);
            }
            w = w + w;
            if w > limit {
                return Err(OperatorError::BracketFailure {
                    x: [x[0].as_f64(), x[1].as_f64()],
                    d: d.as_f64(),
                    limit: limit.as_f64(),
                });
            }
        };
        let mut q = bisect(g, lo, hi, T::tol(ROOT_TOL));
        let mut gq = g(q);
        for _ in 0..NEWTON_POLISH_STEPS {
            if gq == T::zero() {
                break;
            }
            let h = fd_step::<T>() * (T::one() + q.abs());
            let slope = (g(q + h) - g(q - h)) / (h + h);
            if !(slope > T::zero()) || !slope.is_finite() {
                break;
            }
            let cand = q - gq / slope;
            if !(cand >= lo && cand <= hi) {
                break;
            }
            let gc = g(cand);
            if gc.abs() >= gq.abs() {
                break;
            }
            q = cand;
            gq = gc;
        }
        Ok(q)
    }

    /// Effective vertical flux `A_2(x, (q*(x, d), d))`.
    pub fn effective_a2(&self, x: Point<T>, d: T) -> Result<T, OperatorError> {
        let q = self.solve_a1_root(x, d)?;
        Ok(self.evaluate(x, [q, d])[1])
    }

    /// Returns `(q*, A2_eff, dA2_eff/dd)`; the derivative is a central difference.
    pub fn effective_a2_with_slope(&self, x: Point<T>, d: T) -> Result<(T, T, T), OperatorError> {
        let q = self.solve_a1_root(x, d)?;
        let a2 = self.evaluate(x, [q, d])[1];
        let slope = if self.is_radial() {
            // q* = 0 for radial operators, so A2_eff(d) = alpha rho(|d|) sign(d)
            let h = fd_step::<T>() * (T::one() + d.abs());
            let a = self.alpha.eval(x);
            let f = |t: T| a * self.rho_over_s(t.abs()) * t;
            (f(d + h) - f(d - h)) / (h + h)
        } else {
            let h = fd_step::<T>() * (T::one() + d.abs());
            (self.effective_a2(x, d + h)? - self.effective_a2(x, d - h)?) / (h + h)
        };
        Ok((q, a2, slope))
    }
}

/// Eigenvalues `(min, max)` of a symmetric 2x2 matrix.
pub fn sym_eigenvalues<T: Real>(m: [[T; 2]; 2]) -> (T, T) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr / T::lit(4.0) - det).max(T::zero()).sqrt();
    (tr / T::lit(2.0) - disc, tr / T::lit(2.0) + disc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport<T> {
    pub n_samples: usize,
    pub violations: usize,
    /// Empirical lower bound of `(A(x, xi) . xi + k) / |xi|^2`.
    pub c0_lower: T,
    /// Empirical upper bound of `(|A(x, xi)| - k) / |xi|`.
    pub c1_upper: T,
    /// Smallest observed normalized monotonicity margin.
    pub min_monotonicity: T,
    pub pass: bool,
}

/// Smallest monotonicity pair separation, in units of `epsilon * |xi|`.
const RESOLVABLE_ULPS: f64 = 1e3;

/// Monte Carlo audit of strict monotonicity, coercivity and linear growth.
pub fn check_hypotheses<T: Real>(
    spec: &OperatorSpec<T>,
    n_samples: usize,
    domain: &DomainBox<T>,
    seed: u64,
) -> Result<HypothesisReport<T>, OperatorError> {
    if n_samples < 10_000 {
        return Err(OperatorError::InvalidOperator(format!(
            "check_hypotheses needs n_samples >= 10000, got {n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_vec = |rng: &mut ChaCha8Rng, lo_exp: f64, hi_exp: f64| -> [T; 2] {
        let r = 10f64.powf(rng.gen_range(lo_exp..hi_exp));
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        [T::lit(r * th.cos()), T::lit(r * th.sin())]
    };
    let k = spec.k_const();
    let mut c0_lower = T::infinity();
    let mut c1_upper = T::zero();
    let mut min_mono = T::infinity();
    for _ in 0..n_samples {
        let x = [
            T::lit(rng.gen_range(domain.x1.0.as_f64()..=domain.x1.1.as_f64())),
            T::lit(rng.gen_range(domain.x2.0.as_f64()..=domain.x2.1.as_f64())),
        ];
        let xi = random_vec(&mut rng, -3.0, 3.0);
        let delta = random_vec(&mut rng, -6.0, 3.0);
        let xi_p = [xi[0] + delta[0], xi[1] + delta[1]];
        let (a, ap) = (spec.evaluate(x, xi), spec.evaluate(x, xi_p));
        let diff = [xi[0] - xi_p[0], xi[1] - xi_p[1]];
        let dn = norm(diff);
        let mono = dot([a[0] - ap[0], a[1] - ap[1]], diff);
        let to64 = |p: [T; 2]| [p[0].as_f64(), p[1].as_f64()];
        // pairs closer than the rounding noise of A cannot show a positive margin
        let resolvable = dn > T::lit(RESOLVABLE_ULPS) * T::epsilon() * T::one().max(norm(xi)).max(norm(xi_p));
        if resolvable && !(mono > T::zero()) {
            return Err(OperatorError::HypothesisViolation {
                hypothesis: "H1 strict monotonicity",
                x: to64(x),
                xi: to64(xi),
                xi_prime: to64(xi_p),
                detail: format!("(A(xi) - A(xi')) . (xi - xi') = {mono:e}"),
            });
        }
        if resolvable {
            min_mono = min_mono.min(mono / (dn * dn));
        }
        let xn = norm(xi);
        c0_lower = c0_lower.min((dot(a, xi) + k) / (xn * xn));
        c1_upper = c1_upper.max((norm(a) - k) / xn);
    }
    if !(c0_lower > T::zero()) {
        return Err(OperatorError::HypothesisViolation {
            hypothesis: "H2 coercivity",
            x: [f64::NAN; 2],
            xi: [f64::NAN; 2],
            xi_prime: [f64::NAN; 2],
            detail: format!("empirical c0 = {c0_lower:e} is not positive"),
        });
    }
    Ok(HypothesisReport {
        n_samples,
        violations: 0,
        c0_lower,
        c1_upper,
        min_monotonicity: min_mono,
        pass: c1_upper.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> DomainBox<f64> {
        DomainBox::new((0.0, 1.0), (0.0, 2.0))
    }

    #[test]
    fn evaluate_examples() {
        let r = OperatorSpec::<f64>::radial_regularized();
        assert_eq!(r.evaluate([0.3, 0.3], [0.0, 0.0]), [0.0, 0.0]);
        let v = r.evaluate([0.3, 0.3], [1.0, 0.0]);
        assert!((v[0] - 1.5).abs() < 1e-15 && v[1] == 0.0);
        let l = OperatorSpec::linear([[2.0, 1.0], [1.0, 3.0]]).unwrap();
        assert_eq!(l.evaluate([0.0, 0.0], [1.0, 1.0]), [3.0, 4.0]);
    }

    #[test]
    fn radial_consistency() {
        for spec in [OperatorSpec::<f64>::radial_regularized(), OperatorSpec::radial_atan()] {
            for xi in [[0.3, -0.2], [5.0, 1.0], [1e-5, 2e-5]] {
                let a = spec.evaluate([0.1, 0.1], xi);
                let n = norm(xi);
                assert!((dot(a, xi) - spec.rho(n) * n).abs() < 1e-12 * (1.0 + n * n));
            }
        }
    }

    #[test]
    fn atan_series_matches_direct() {
        let spec = OperatorSpec::<f64>::radial_atan();
        let s: f64 = 0.99e-4;
        let direct = 1.0 + s.atan() / s;
        assert!((spec.rho_over_s(s) - direct).abs() < 1e-15);
    }

    #[test]
    fn hypotheses_pass_for_shipped_families() {
        let r = check_hypotheses(&OperatorSpec::radial_regularized(), 10_000, &unit_box(), 1).unwrap();
        assert!(r.pass && r.c0_lower >= 1.0 && r.c1_upper <= 2.0);
        let r = check_hypotheses(&OperatorSpec::radial_atan(), 10_000, &unit_box(), 2).unwrap();
        assert!(r.pass && r.c0_lower >= 1.0 && r.c1_upper <= 2.0);
        let l = OperatorSpec::linear([[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let r = check_hypotheses(&l, 10_000, &unit_box(), 3).unwrap();
        let lmin = (5.0 - 5f64.sqrt()) / 2.0;
        let lmax = (5.0 + 5f64.sqrt()) / 2.0;
        assert!(r.c0_lower >= lmin - 1e-12 && r.c0_lower < lmin + 1e-2, "{}", r.c0_lower);
        assert!(r.c1_upper <= lmax + 1e-12 && r.c1_upper > lmax - 1e-2);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let l = OperatorSpec::linear([[1.0, 3.0], [3.0, 1.0]]).unwrap();
        assert!(matches!(
            check_hypotheses(&l, 10_000, &unit_box(), 0),
            Err(OperatorError::HypothesisViolation { hypothesis: "H1 strict monotonicity", .. })
        ));
        assert_eq!(sym_eigenvalues([[1.0, 3.0], [3.0, 1.0]]), (-2.0, 4.0));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(OperatorSpec::linear([[1.0, 2.0], [0.0, 1.0]]).is_err());
        assert!(OperatorSpec::<f64>::new(
            OperatorFamily::RadialAtan,
            None,
            Alpha::Constant(-1.0),
            0.0
        )
        .is_err());
        assert!(check_hypotheses(&OperatorSpec::<f64>::identity(), 10, &unit_box(), 0).is_err());
    }

    #[test]
    fn a1_root_examples() {
        let l = OperatorSpec::<f64>::linear([[2.0, 1.0], [1.0, 3.0]]).unwrap();
        assert!((l.solve_a1_root([0.2, 0.2], 1.0).unwrap() + 0.5).abs() < 1e-12);
        assert!((l.effective_a2([0.2, 0.2], 1.0).unwrap() - 2.5).abs() < 1e-12);
        for spec in [OperatorSpec::<f64>::radial_regularized(), OperatorSpec::radial_atan()] {
            assert_eq!(spec.solve_a1_root([0.1, 0.1], 0.0).unwrap(), 0.0);
            assert!(spec.solve_a1_root([0.1, 0.1], 1.0).unwrap().abs() < 1e-12);
            assert_eq!(spec.effective_a2([0.1, 0.1], 0.0).unwrap(), 0.0);
        }
        let r = OperatorSpec::<f64>::radial_regularized();
        assert!((r.effective_a2([0.1, 0.1], 1.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn a1_root_with_spatial_alpha() {
        let spec = OperatorSpec::new(
            OperatorFamily::LinearMatrix,
            Some([[1.5, -0.7], [-0.7, 2.0]]),
            Alpha::Affine { base: 1.0, slope_x1: 0.5, slope_x2: 0.0 },
            0.0,
        )
        .unwrap();
        for d in [-3.0f64, -0.1, 0.0, 0.4, 7.0] {
            let q = spec.solve_a1_root([0.7, 0.3], d).unwrap();
            // independent oracle: the linear equation 1.5 q - 0.7 d = 0
            assert!((q - 0.7 * d / 1.5).abs() < 1e-12 * (1.0 + d.abs()));
            assert!(spec.a1([0.7, 0.3], q, d).abs() <= 1e-10 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn jacobian_symmetric_and_consistent() {
        let spec = OperatorSpec::<f64>::radial_atan();
        let xi = [0.4, -1.3];
        let j = spec.jacobian([0.0, 0.0], xi);
        assert_eq!(j[0][1], j[1][0]);
        let h = 1e-7;
        let a = spec.evaluate([0.0, 0.0], [xi[0] + h, xi[1]]);
        let b = spec.evaluate([0.0, 0.0], xi);
        assert!(((a[0] - b[0]) / h - j[0][0]).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn specs() -> Vec<OperatorSpec<f64>> {
            vec![
                OperatorSpec::radial_regularized(),
                OperatorSpec::radial_atan(),
                OperatorSpec::linear([[2.0, 1.0], [1.0, 3.0]]).unwrap(),
            ]
        }

        proptest! {
            #[test]
            fn strict_monotonicity(a in -50.0..50.0f64, b in -50.0..50.0f64,
                                   c in -50.0..50.0f64, d in -50.0..50.0f64) {
                let diff = [a - c, b - d];
                prop_assume!(norm(diff) > 1e-9);
                for s in specs() {
                    let (u, v) = (s.evaluate([0.5, 0.5], [a, b]), s.evaluate([0.5, 0.5], [c, d]));
                    prop_assert!(dot([u[0] - v[0], u[1] - v[1]], diff) > 0.0);
                }
            }

            #[test]
            fn a1_residual_small(d in -100.0..100.0f64, x1 in 0.0..1.0f64) {
                for s in specs() {
                    let q = s.solve_a1_root([x1, 0.5], d).unwrap();
                    prop_assert!(s.a1([x1, 0.5], q, d).abs() <= 1e-10 * (1.0 + d.abs()));
                }
            }

            #[test]
            fn effective_flux_increasing(d in -20.0..20.0f64, step in 1e-3..5.0f64) {
                for s in specs() {
                    let lo = s.effective_a2([0.3, 1.2], d).unwrap();
                    let hi = s.effective_a2([0.3, 1.2], d + step).unwrap();
                    prop_assert!(hi > lo);
                }
            }
        }
    }
}
