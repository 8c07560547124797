//! Weak-convergence metrics comparing an `eps`-solution with the limit solution.

use crate::fem::{integrate_field, FemError, Field, Integrand, Region};
use crate::geometry::{DensityField, Layout, RegionTag};
use crate::limit::{DensityQuadrature, LimitError, LimitSolution};
use crate::operator::OperatorSpec;
use crate::quadrature::SEVEN_POINT;
use crate::scalar::{Point, Real};

use super::bank::TestFunctionBank;
use super::HarnessError;

/// Limit solution with the weight and the recovered flux at seven-point quadrature nodes.
#[derive(Clone, Debug)]
pub struct LimitData<'a, T> {
    pub solution: &'a LimitSolution<T>,
    hq: DensityQuadrature<T>,
    /// `qbar` at the quadrature nodes of each `Omega+` triangle (empty elsewhere).
    qbar: Vec<Vec<T>>,
}

impl<'a, T: Real> LimitData<'a, T> {
    pub fn new(
        solution: &'a LimitSolution<T>,
        density: &DensityField<T>,
        spec: &OperatorSpec<T>,
    ) -> Result<Self, LimitError> {
        let mesh = solution.u0.mesh();
        let hq = DensityQuadrature::new(mesh, density, SEVEN_POINT)?;
        let mut qbar = Vec::with_capacity(mesh.triangle_count());
        for t in 0..mesh.triangle_count() {
            if mesh.region_tags[t] != RegionTag::OmegaPlus {
                qbar.push(Vec::new());
                continue;
            }
            let d = solution.u0.gradient(t)[1];
            let tri = mesh.triangle_points(t);
            qbar.push(SEVEN_POINT.points(&tri).map(|(p, _, _)| spec.solve_a1_root(p, d)).collect::<Result<_, _>>()?);
        }
        Ok(LimitData { solution, hq, qbar })
    }

    /// `int_Omega h u0 phi`.
    pub fn weighted_u(&self, phi: impl Fn(Point<T>) -> T) -> T {
        let u = &self.solution.u0;
        self.hq.integrate(u.mesh(), None, |t, p, l| u.eval_in(t, l) * phi(p))
    }

    /// `int_{Omega+} h qbar phi`.
    pub fn weighted_qbar(&self, phi: impl Fn(Point<T>) -> T) -> T {
        let mesh = self.solution.u0.mesh();
        let mut total = T::zero();
        for t in 0..mesh.triangle_count() {
            if self.qbar[t].is_empty() {
                continue;
            }
            let tri = mesh.triangle_points(t);
            let area = mesh.signed_area(t);
            let mut acc = T::zero();
            for (q, (p, _, w)) in SEVEN_POINT.points(&tri).enumerate() {
                acc += w * self.hq.at(t)[q] * self.qbar[t][q] * phi(p);
            }
            total += acc * area;
        }
        total
    }

    /// `int_{Omega+} h d2 u0 phi`.
    pub fn weighted_d2_plus(&self, phi: impl Fn(Point<T>) -> T) -> T {
        let u = &self.solution.u0;
        self.hq.integrate(u.mesh(), Some(RegionTag::OmegaPlus), |t, p, _| u.gradient(t)[1] * phi(p))
    }

    /// `int_{Omega-} d_c u0 phi`.
    pub fn grad_minus(&self, c: usize, phi: impl Fn(Point<T>) -> T) -> T {
        let u = &self.solution.u0;
        self.hq.integrate(u.mesh(), Some(RegionTag::OmegaMinus), |t, p, _| u.gradient(t)[c] * phi(p))
    }
}

fn check_geometry<T: Real>(u_eps: &Field<T>, limit: &LimitData<'_, T>) -> Result<(), HarnessError> {
    let em = u_eps.mesh();
    let lm = limit.solution.u0.mesh();
    if em.eps().is_none() {
        return Err(HarnessError::IncompatibleGeometry("first field is not on an eps-mesh".into()));
    }
    let limit_ok = matches!(lm.layout(), Layout::Layered { .. })
        || lm.region_tags.iter().all(|r| *r == RegionTag::OmegaMinus);
    if !limit_ok {
        return Err(HarnessError::IncompatibleGeometry("limit solution is not on a limit mesh".into()));
    }
    let (a, b) = (em.interface_at(T::lit(0.5)), lm.interface_at(T::lit(0.5)));
    if let (Some(a), Some(b)) = (a, b) {
        if (a - b).abs() > T::tol(1e-9) * (T::one() + a.abs()) {
            return Err(HarnessError::IncompatibleGeometry(format!(
                "meshes disagree on eta_-(0.5): {a} vs {b}"
            )));
        }
    }
    Ok(())
}

fn eps_integral<T: Real>(u: &Field<T>, what: Integrand<'_, T>, phi: impl Fn(Point<T>) -> T, r: Region) -> Result<T, FemError> {
    integrate_field(u.mesh(), what, phi, r)
}

/// `max_phi |int_{Omega_eps} u_eps phi - int_Omega h u0 phi| / |phi|`.
pub fn weak_error_u<T: Real>(
    u_eps: &Field<T>,
    limit: &LimitData<'_, T>,
    bank: &TestFunctionBank<T>,
) -> Result<T, HarnessError> {
    check_geometry(u_eps, limit)?;
    let mut worst = T::zero();
    for phi in &bank.members {
        let f = |p: Point<T>| phi.eval(p);
        let a = eps_integral(u_eps, Integrand::Value(u_eps), f, Region::Whole)?;
        worst = worst.max((a - limit.weighted_u(f)).abs() / phi.norm);
    }
    Ok(worst)
}

/// Flux errors `(e1_plus, e2_plus, e_minus)`: horizontal derivative against `h qbar`
/// and vertical derivative against `h d2 u0` on `Omega+`, and the full gradient on
/// `Omega-` (componentwise maximum).
pub fn weak_error_flux<T: Real>(
    u_eps: &Field<T>,
    limit: &LimitData<'_, T>,
    bank: &TestFunctionBank<T>,
) -> Result<(T, T, T), HarnessError> {
    check_geometry(u_eps, limit)?;
    let (mut e1, mut e2, mut em) = (T::zero(), T::zero(), T::zero());
    for phi in &bank.members {
        let f = |p: Point<T>| phi.eval(p);
        let n = phi.norm;
        let g1 = eps_integral(u_eps, Integrand::Gradient(u_eps, 0), f, Region::OmegaPlus)?;
        e1 = e1.max((g1 - limit.weighted_qbar(f)).abs() / n);
        let g2 = eps_integral(u_eps, Integrand::Gradient(u_eps, 1), f, Region::OmegaPlus)?;
        e2 = e2.max((g2 - limit.weighted_d2_plus(f)).abs() / n);
        for c in 0..2 {
            let gm = eps_integral(u_eps, Integrand::Gradient(u_eps, c), f, Region::OmegaMinus)?;
            em = em.max((gm - limit.grad_minus(c, f)).abs() / n);
        }
    }
    Ok((e1, e2, em))
}
