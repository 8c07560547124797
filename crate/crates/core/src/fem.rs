//! P1 finite elements for `-div A(x, grad u) = f` on the oscillating domain,
//! with `u = 0` on the bottom and homogeneous Neumann data elsewhere.

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{GeometryError, Layout, Mesh, RegionTag};
use crate::operator::{OperatorError, OperatorSpec};
use crate::quadrature::{clip_triangle, p1_gradients, signed_area, Side, TriRule, MID_EDGE, SEVEN_POINT};
use crate::scalar::{dot, Point, Real};
use crate::solver::{self, DofMap, ElementBlock, ElementKernel, SolveFailure, SolveStats, SolverOptions, StepMode};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("field has {got} values but the mesh has {expected} vertices")]
    MeshFieldMismatch { expected: usize, got: usize },
    #[error("nonlinear solve did not converge after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NonConvergence { iterations: usize, residual: f64, tolerance: f64 },
    #[error("point ({0}, {1}) lies outside the meshed domain")]
    PointOutsideDomain(f64, f64),
    #[error("region {0} is not defined on this mesh")]
    UnknownRegionTag(&'static str),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Piecewise-linear function given by its vertex values.
#[derive(Clone, Debug)]
pub struct Field<T> {
    mesh: Arc<Mesh<T>>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(mesh: Arc<Mesh<T>>, values: Vec<T>) -> Result<Self, FemError> {
        if values.len() != mesh.vertex_count() {
            return Err(FemError::MeshFieldMismatch { expected: mesh.vertex_count(), got: values.len() });
        }
        Ok(Field { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh<T>>) -> Self {
        let n = mesh.vertex_count();
        Field { mesh, values: vec![T::zero(); n] }
    }

    /// Nodal interpolant of `g`.
    pub fn interpolate(mesh: Arc<Mesh<T>>, g: impl Fn(Point<T>) -> T) -> Self {
        let values = mesh.vertices.iter().map(|p| g(*p)).collect();
        Field { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// `a * self + b * other` on the same mesh.
    pub fn combine(&self, a: T, other: &Field<T>, b: T) -> Result<Field<T>, FemError> {
        if other.values.len() != self.values.len() {
            return Err(FemError::MeshFieldMismatch { expected: self.values.len(), got: other.values.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(u, v)| a * *u + b * *v).collect();
        Ok(Field { mesh: self.mesh.clone(), values })
    }

    /// Constant gradient on triangle `t`.
    pub fn gradient(&self, t: usize) -> [T; 2] {
        let tri = self.mesh.triangle_points(t);
        let (g, _) = p1_gradients(&tri);
        let idx = self.mesh.triangles[t];
        let mut grad = [T::zero(); 2];
        for k in 0..3 {
            grad[0] += self.values[idx[k]] * g[k][0];
            grad[1] += self.values[idx[k]] * g[k][1];
        }
        grad
    }

    /// Value at barycentric coordinates inside triangle `t`.
    pub fn eval_in(&self, t: usize, bary: [T; 3]) -> T {
        let idx = self.mesh.triangles[t];
        bary[0] * self.values[idx[0]] + bary[1] * self.values[idx[1]] + bary[2] * self.values[idx[2]]
    }

    /// Exact P1 evaluation at `x`.
    pub fn point_eval(&self, x: Point<T>) -> Result<T, FemError> {
        let loc = self
            .mesh
            .locate(x)
            .ok_or_else(|| FemError::PointOutsideDomain(x[0].as_f64(), x[1].as_f64()))?;
        Ok(self.eval_in(loc.triangle, loc.bary))
    }

    /// `vertex_index value` records.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (v, u) in self.values.iter().enumerate() {
            writeln!(w, "{v} {u:.17e}")?;
        }
        Ok(())
    }
}

/// What is integrated against the test function.
#[derive(Clone, Copy, Debug)]
pub enum Integrand<'a, T> {
    One,
    Value(&'a Field<T>),
    /// Component `0` or `1` of the gradient.
    Gradient(&'a Field<T>, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Whole,
    /// Below `eta_-`.
    OmegaMinus,
    /// Above `eta_-`.
    OmegaPlus,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::OmegaMinus => "omega_minus",
            Region::OmegaPlus => "omega_plus",
        }
    }
}

/// Pieces of triangle `t` inside `region` (the whole triangle, a clipped part, or nothing).
pub(crate) fn region_pieces<T: Real>(
    mesh: &Mesh<T>,
    t: usize,
    region: Region,
) -> Result<Vec<[Point<T>; 3]>, FemError> {
    let tri = mesh.triangle_points(t);
    if region == Region::Whole {
        return Ok(vec![tri]);
    }
    match mesh.layout() {
        Layout::Layered { .. } => {
            let want = if region == Region::OmegaPlus { RegionTag::OmegaPlus } else { RegionTag::OmegaMinus };
            Ok(if mesh.region_tags[t] == want { vec![tri] } else { Vec::new() })
        }
        Layout::Graph { interface: Some(_), .. } | Layout::Levels(_) | Layout::Fingers(_) => {
            let eta_minus = mesh.interface_heights().expect("eps-mesh interface");
            let (i, nx) = (mesh.triangle_column(t), mesh.nx());
            let (xa, xb) = (T::from_count(i) / T::from_count(nx), T::from_count(i + 1) / T::from_count(nx));
            let (ya, yb) = (eta_minus[i], eta_minus[i + 1]);
            let c1 = (yb - ya) / (xb - xa);
            let c0 = ya - c1 * xa;
            let side = if region == Region::OmegaPlus { Side::Above } else { Side::Below };
            Ok(clip_triangle(&tri, c0, c1, side))
        }
        Layout::Graph { interface: None, .. } => {
            if mesh.region_tags.iter().all(|r| *r == RegionTag::OmegaMinus) {
                Ok(if region == Region::OmegaMinus { vec![tri] } else { Vec::new() })
            } else {
                Err(FemError::UnknownRegionTag(region.as_str()))
            }
        }
    }
}

/// `int_region v * test dx` by per-triangle seven-point quadrature. On a mesh of the
/// oscillating domain this also equals the integral of the zero extension over `Omega`.
pub fn integrate_field<T: Real, G: Fn(Point<T>) -> T>(
    mesh: &Mesh<T>,
    integrand: Integrand<'_, T>,
    test: G,
    region: Region,
) -> Result<T, FemError> {
    integrate_with_rule(mesh, integrand, test, region, SEVEN_POINT)
}

pub(crate) fn integrate_with_rule<T: Real, G: Fn(Point<T>) -> T>(
    mesh: &Mesh<T>,
    integrand: Integrand<'_, T>,
    test: G,
    region: Region,
    rule: TriRule,
) -> Result<T, FemError> {
    if let Integrand::Value(f) | Integrand::Gradient(f, _) = integrand {
        if f.values.len() != mesh.vertex_count() {
            return Err(FemError::MeshFieldMismatch { expected: mesh.vertex_count(), got: f.values.len() });
        }
    }
    let mut total = T::zero();
    for t in 0..mesh.triangle_count() {
        let pieces = region_pieces(mesh, t, region)?;
        if pieces.is_empty() {
            continue;
        }
        let grad_c = match integrand {
            Integrand::Gradient(f, c) => Some(f.gradient(t)[c]),
            _ => None,
        };
        for piece in &pieces {
            let area = signed_area(piece);
            let mut acc = T::zero();
            for (p, _, w) in rule.points(piece) {
                let v = match integrand {
                    Integrand::One => T::one(),
                    Integrand::Value(f) => f.eval_in(t, mesh.barycentric(t, p)),
                    Integrand::Gradient(..) => grad_c.unwrap_or_else(T::zero),
                };
                acc += w * v * test(p);
            }
            total += acc * area;
        }
    }
    Ok(total)
}

/// `sqrt(int (u_h - exact)^2)`.
pub fn l2_error<T: Real>(field: &Field<T>, exact: impl Fn(Point<T>) -> T) -> T {
    let mesh = field.mesh();
    let mut total = T::zero();
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle_points(t);
        let area = signed_area(&tri);
        for (p, l, w) in SEVEN_POINT.points(&tri) {
            let e = field.eval_in(t, l) - exact(p);
            total += w * e * e * area;
        }
    }
    total.sqrt()
}

/// Measured norms of a discrete solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldNorms<T> {
    pub u_l2: T,
    pub grad_l2: T,
    pub flux_l2: T,
    /// `sum_T int A(x, grad u) . grad u`.
    pub energy: T,
}

pub fn field_norms<T: Real>(field: &Field<T>, spec: &OperatorSpec<T>) -> FieldNorms<T> {
    let mesh = field.mesh();
    let (mut u2, mut g2, mut a2, mut en) = (T::zero(), T::zero(), T::zero(), T::zero());
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle_points(t);
        let area = signed_area(&tri);
        let g = field.gradient(t);
        for (p, l, w) in SEVEN_POINT.points(&tri) {
            let u = field.eval_in(t, l);
            let a = spec.evaluate(p, g);
            u2 += w * area * u * u;
            g2 += w * area * dot(g, g);
            a2 += w * area * dot(a, a);
            en += w * area * dot(a, g);
        }
    }
    FieldNorms { u_l2: u2.sqrt(), grad_l2: g2.sqrt(), flux_l2: a2.sqrt(), energy: en }
}

/// `|f|_L2` over the mesh.
pub fn source_l2<T: Real>(mesh: &Mesh<T>, f: impl Fn(Point<T>) -> T) -> T {
    let mut total = T::zero();
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle_points(t);
        let area = signed_area(&tri);
        for (p, _, w) in SEVEN_POINT.points(&tri) {
            let v = f(p);
            total += w * v * v * area;
        }
    }
    total.sqrt()
}

/// Element kernel of the weak form `int A(x, grad u) . grad phi = int f phi`.
pub(crate) struct EpsKernel<'a, T, F> {
    pub mesh: &'a Mesh<T>,
    pub spec: &'a OperatorSpec<T>,
    pub f: &'a F,
}

/// Full-operator contribution of one triangle with mid-edge quadrature.
pub(crate) fn full_operator_element<T: Real, F: Fn(Point<T>) -> T>(
    mesh: &Mesh<T>,
    spec: &OperatorSpec<T>,
    f: &F,
    t: usize,
    u: &[T],
    matrix: Option<StepMode>,
) -> ElementBlock<T> {
    let tri = mesh.triangle_points(t);
    let idx = mesh.triangles[t];
    let (g, area) = p1_gradients(&tri);
    let mut grad = [T::zero(); 2];
    for k in 0..3 {
        grad[0] += u[idx[k]] * g[k][0];
        grad[1] += u[idx[k]] * g[k][1];
    }
    let mut res = [T::zero(); 3];
    let mut mat = [[T::zero(); 3]; 3];
    for (p, l, w) in MID_EDGE.points(&tri) {
        let wa = w * area;
        let a = spec.evaluate(p, grad);
        let fv = f(p);
        for i in 0..3 {
            res[i] += wa * (dot(a, g[i]) - fv * l[i]);
        }
        if let Some(mode) = matrix {
            let j = match mode {
                StepMode::Newton => spec.jacobian(p, grad),
                StepMode::Picard => spec.secant(p, grad),
            };
            for i in 0..3 {
                let jg = [j[0][0] * g[i][0] + j[0][1] * g[i][1], j[1][0] * g[i][0] + j[1][1] * g[i][1]];
                for k in 0..3 {
                    mat[k][i] += wa * dot(g[k], jg);
                }
            }
        }
    }
    (res, mat)
}

impl<T: Real, F: Fn(Point<T>) -> T + Sync> ElementKernel<T> for EpsKernel<'_, T, F> {
    type Error = FemError;

    fn mesh(&self) -> &Mesh<T> {
        self.mesh
    }

    fn element(&self, t: usize, u: &[T], matrix: Option<StepMode>) -> Result<ElementBlock<T>, FemError> {
        Ok(full_operator_element(self.mesh, self.spec, self.f, t, u, matrix))
    }
}

/// Residual `R_i = sum_T int_T A(x, grad u) . grad phi_i - f phi_i`, with `gamma_b` rows zeroed.
pub fn assemble_residual<T: Real, F: Fn(Point<T>) -> T + Sync>(
    mesh: &Mesh<T>,
    spec: &OperatorSpec<T>,
    u: &Field<T>,
    f: &F,
) -> Result<Vec<T>, FemError> {
    if u.values.len() != mesh.vertex_count() {
        return Err(FemError::MeshFieldMismatch { expected: mesh.vertex_count(), got: u.values.len() });
    }
    solver::assemble_residual(&EpsKernel { mesh, spec, f }, &u.values)
}

/// Linearized matrix on the free unknowns (Newton: finite-difference Jacobian of `A`).
pub fn assemble_linearization<T: Real, F: Fn(Point<T>) -> T + Sync>(
    mesh: &Mesh<T>,
    spec: &OperatorSpec<T>,
    u: &Field<T>,
    f: &F,
    mode: StepMode,
) -> Result<(CsrMatrix<T>, DofMap), FemError> {
    let dofs = DofMap::new(mesh);
    let mut mat = dofs.pattern(mesh);
    solver::assemble_matrix(&EpsKernel { mesh, spec, f }, &dofs, &u.values, mode, &mut mat)?;
    Ok((mat, dofs))
}

/// Damped Newton solve of the discrete weak form.
pub fn solve_nonlinear<T: Real, F: Fn(Point<T>) -> T + Sync>(
    mesh: Arc<Mesh<T>>,
    spec: &OperatorSpec<T>,
    f: &F,
    opts: &SolverOptions<T>,
) -> Result<(Field<T>, SolveStats<T>), FemError> {
    let fnorm = source_l2(&mesh, f);
    let kernel = EpsKernel { mesh: &mesh, spec, f };
    match solver::damped_newton(&kernel, opts, fnorm) {
        Ok((values, stats)) => Ok((Field { mesh: mesh.clone(), values }, stats)),
        Err(SolveFailure::Kernel(e)) => Err(e),
        Err(SolveFailure::NotConverged(un)) => Err(FemError::NonConvergence {
            iterations: un.stats.iterations,
            residual: un.stats.residual.as_f64(),
            tolerance: un.stats.tolerance.as_f64(),
        }),
    }
}
