//! The homogenized problem on the fixed domain: full operator below `eta_-`, and
//! only the `h`-weighted vertical flux `A_2(x, q*, d2 u0)` above it, where
//! `q*` solves `A_1(x, q*, d2 u0) = 0` pointwise.

use std::collections::VecDeque;
use std::io::{self, Write};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{full_operator_element, source_l2, FemError, Field};
use crate::geometry::{DensityField, GeometryError, Layout, Mesh, RegionTag};
use crate::operator::{OperatorError, OperatorSpec};
use crate::quadrature::{p1_gradients, signed_area, TriRule, MID_EDGE, SEVEN_POINT};
use crate::scalar::{Point, Real};
use crate::solver::{self, DofMap, ElementBlock, ElementKernel, SolveFailure, SolveStats, SolverOptions, StepMode};
use crate::sparse::CsrMatrix;

/// Weight below which a quadrature point carries no stiffness.
pub const H_CUTOFF: f64 = 1e-14;
/// Bound on `|h A_1(x, (qbar, d2 u0))|` at the recovered flux.
pub const CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("mesh lacks omega_minus/omega_plus region tags (not built by build_mesh_limit)")]
    MissingRegionTags,
    #[error("vertex {vertex} in column {column} of Omega+ has no vertical chain to Omega-")]
    SingularColumn { column: usize, vertex: usize },
    #[error("limit solve did not converge after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NonConvergence { iterations: usize, residual: f64, tolerance: f64 },
    #[error("constraint residual {0:e} exceeds tolerance")]
    ConstraintViolation(f64),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Density values at the quadrature points of every triangle (1 on `Omega-`).
#[derive(Clone, Debug)]
pub struct DensityQuadrature<T> {
    rule: TriRule,
    h: Vec<Vec<T>>,
}

impl<T: Real> DensityQuadrature<T> {
    pub fn new(mesh: &Mesh<T>, density: &DensityField<T>, rule: TriRule) -> Result<Self, GeometryError> {
        let h = (0..mesh.triangle_count())
            .into_par_iter()
            .map(|t| {
                if mesh.region_tags[t] != RegionTag::OmegaPlus {
                    return Ok(vec![T::one(); rule.len()]);
                }
                let tri = mesh.triangle_points(t);
                rule.points(&tri).map(|(p, _, _)| density.h(p)).collect()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DensityQuadrature { rule, h })
    }

    pub fn rule(&self) -> TriRule {
        self.rule
    }

    pub fn at(&self, t: usize) -> &[T] {
        &self.h[t]
    }

    /// `sum_T sum_q w_q |T| h_q g(t, x_q, bary_q)` over the triangles of `region`
    /// (`None` for the whole mesh).
    pub fn integrate(
        &self,
        mesh: &Mesh<T>,
        region: Option<RegionTag>,
        g: impl Fn(usize, Point<T>, [T; 3]) -> T,
    ) -> T {
        let mut total = T::zero();
        for t in 0..mesh.triangle_count() {
            if region.is_some_and(|r| mesh.region_tags[t] != r) {
                continue;
            }
            let tri = mesh.triangle_points(t);
            let area = signed_area(&tri);
            let mut acc = T::zero();
            for (q, (p, l, w)) in self.rule.points(&tri).enumerate() {
                acc += w * self.h[t][q] * g(t, p, l);
            }
            total += acc * area;
        }
        total
    }
}

fn check_regions<T: Real>(mesh: &Mesh<T>) -> Result<(), LimitError> {
    match mesh.layout() {
        Layout::Layered { .. } => Ok(()),
        Layout::Graph { .. } if mesh.region_tags.iter().all(|r| *r == RegionTag::OmegaMinus) => Ok(()),
        _ => Err(LimitError::MissingRegionTags),
    }
}

/// Every `Omega+` vertex must reach `Omega-` through vertical edges of triangles
/// carrying positive weight.
fn check_columns<T: Real>(mesh: &Mesh<T>, hq: &DensityQuadrature<T>) -> Result<(), LimitError> {
    let n = mesh.vertex_count();
    let mut reached = vec![false; n];
    let mut in_plus = vec![false; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        match mesh.region_tags[t] {
            RegionTag::OmegaPlus => {
                tri.iter().for_each(|&v| in_plus[v] = true);
                let weight: T = hq.at(t).iter().copied().sum();
                if weight <= T::lit(H_CUTOFF) {
                    continue;
                }
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    if mesh.column_index[a] == mesh.column_index[b] {
                        adj[a].push(b);
                        adj[b].push(a);
                    }
                }
            }
            _ => tri.iter().for_each(|&v| reached[v] = true),
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| reached[v]).collect();
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !reached[w] {
                reached[w] = true;
                queue.push_back(w);
            }
        }
    }
    match (0..n).find(|&v| in_plus[v] && !reached[v]) {
        Some(v) => Err(LimitError::SingularColumn { column: mesh.column_index[v], vertex: v }),
        None => Ok(()),
    }
}

/// `(d, [(q*, A2_eff, slope); 3])` memoized per triangle for the latest `d`.
type FluxMemo<T> = Mutex<Option<(T, Vec<(T, T, T)>)>>;

struct LimitKernel<'a, T, F> {
    mesh: &'a Mesh<T>,
    spec: &'a OperatorSpec<T>,
    hq: &'a DensityQuadrature<T>,
    f: &'a F,
    vertical_terms: bool,
    memo: Vec<FluxMemo<T>>,
}

impl<'a, T: Real, F: Fn(Point<T>) -> T + Sync> LimitKernel<'a, T, F> {
    fn new(mesh: &'a Mesh<T>, spec: &'a OperatorSpec<T>, hq: &'a DensityQuadrature<T>, f: &'a F) -> Self {
        let memo = (0..mesh.triangle_count()).map(|_| Mutex::new(None)).collect();
        LimitKernel { mesh, spec, hq, f, vertical_terms: true, memo }
    }

    fn fluxes(&self, t: usize, d: T, pts: &[Point<T>]) -> Result<Vec<(T, T, T)>, OperatorError> {
        let mut slot = self.memo[t].lock().expect("memo lock");
        if let Some((d0, vals)) = slot.as_ref() {
            if *d0 == d {
                return Ok(vals.clone());
            }
        }
        let vals = pts
            .iter()
            .zip(self.hq.at(t))
            .map(|(p, h)| {
                if *h < T::lit(H_CUTOFF) {
                    Ok((self.spec.solve_a1_root(*p, d)?, T::zero(), T::zero()))
                } else {
                    self.spec.effective_a2_with_slope(*p, d)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        *slot = Some((d, vals.clone()));
        Ok(vals)
    }
}

impl<T: Real, F: Fn(Point<T>) -> T + Sync> ElementKernel<T> for LimitKernel<'_, T, F> {
    type Error = LimitError;

    fn mesh(&self) -> &Mesh<T> {
        self.mesh
    }

    fn element(&self, t: usize, u: &[T], matrix: Option<StepMode>) -> Result<ElementBlock<T>, LimitError> {
        if self.mesh.region_tags[t] != RegionTag::OmegaPlus {
            return Ok(full_operator_element(self.mesh, self.spec, self.f, t, u, matrix));
        }
        let tri = self.mesh.triangle_points(t);
        let idx = self.mesh.triangles[t];
        let (g, area) = p1_gradients(&tri);
        let d = (0..3).map(|k| u[idx[k]] * g[k][1]).sum::<T>();
        let pts: Vec<(Point<T>, [T; 3], T)> = MID_EDGE.points(&tri).collect();
        let xs: Vec<Point<T>> = pts.iter().map(|p| p.0).collect();
        let fl = self.fluxes(t, d, &xs)?;
        let hs = self.hq.at(t);
        let mut res = [T::zero(); 3];
        let mut mat = [[T::zero(); 3]; 3];
        for (q, (p, l, w)) in pts.iter().enumerate() {
            let h = hs[q];
            if h < T::lit(H_CUTOFF) {
                continue;
            }
            let wah = *w * area * h;
            let (_, a2, slope) = fl[q];
            let fv = (self.f)(*p);
            for i in 0..3 {
                res[i] += wah * (a2 * g[i][1] - fv * l[i]);
            }
            if let (Some(mode), true) = (matrix, self.vertical_terms) {
                let coeff = match mode {
                    StepMode::Newton => slope,
                    StepMode::Picard if d.abs() > T::tol(1e-12) => a2 / d,
                    StepMode::Picard => slope,
                };
                for i in 0..3 {
                    for k in 0..3 {
                        mat[k][i] += wah * coeff * g[k][1] * g[i][1];
                    }
                }
            }
        }
        Ok((res, mat))
    }
}

/// Residual of the limit weak form with `gamma_b` rows zeroed.
pub fn assemble_limit_residual<T: Real, F: Fn(Point<T>) -> T + Sync>(
    mesh: &Mesh<T>,
    spec: &OperatorSpec<T>,
    hq: &DensityQuadrature<T>,
    u0: &Field<T>,
    f: &F,
) -> Result<Vec<T>, LimitError> {
    check_regions(mesh)?;
    if u0.values().len() != mesh.vertex_count() {
        return Err(FemError::MeshFieldMismatch { expected: mesh.vertex_count(), got: u0.values().len() }.into());
    }
    solver::assemble_residual(&LimitKernel::new(mesh, spec, hq, f), u0.values())
}

/// Linearized limit matrix on the free unknowns. With `vertical_terms = false` the
/// `Omega+` triangles contribute nothing, exposing that the limit space carries no
/// horizontal derivative there.
pub fn assemble_limit_linearization<T: Real, F: Fn(Point<T>) -> T + Sync>(
    mesh: &Mesh<T>,
    spec: &OperatorSpec<T>,
    hq: &DensityQuadrature<T>,
    u0: &Field<T>,
    f: &F,
    mode: StepMode,
    vertical_terms: bool,
) -> Result<(CsrMatrix<T>, DofMap), LimitError> {
    check_regions(mesh)?;
    let mut kernel = LimitKernel::new(mesh, spec, hq, f);
    kernel.vertical_terms = vertical_terms;
    let dofs = DofMap::new(mesh);
    let mut mat = dofs.pattern(mesh);
    solver::assemble_matrix(&kernel, &dofs, u0.values(), mode, &mut mat)?;
    Ok((mat, dofs))
}

/// Recovered data at one mid-edge quadrature point of an `Omega+` triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadRecord<T> {
    pub triangle: usize,
    pub x: Point<T>,
    pub h: T,
    pub qbar: T,
    pub d2u0: T,
}

#[derive(Clone, Debug)]
pub struct LimitSolution<T> {
    pub u0: Field<T>,
    pub quad: Vec<QuadRecord<T>>,
    /// `max |h A_1(x, (qbar, d2 u0))|` over the records.
    pub constraint_residual: T,
    pub stats: SolveStats<T>,
}

impl<T: Real> LimitSolution<T> {
    /// `x1,x2,h,qbar,d2u0` table with a header row.
    pub fn write_quad_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x1,x2,h,qbar,d2u0")?;
        for r in &self.quad {
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", r.x[0], r.x[1], r.h, r.qbar, r.d2u0)?;
        }
        Ok(())
    }
}

/// Solves the limit problem on a mesh from `build_mesh_limit`, then recovers `qbar`.
pub fn solve_limit<T: Real, F: Fn(Point<T>) -> T + Sync>(
    mesh: Arc<Mesh<T>>,
    spec: &OperatorSpec<T>,
    density: &DensityField<T>,
    f: &F,
    opts: &SolverOptions<T>,
) -> Result<LimitSolution<T>, LimitError> {
    check_regions(&mesh)?;
    let hq = DensityQuadrature::new(&mesh, density, MID_EDGE)?;
    check_columns(&mesh, &hq)?;
    let fnorm = weighted_source_norm(&mesh, density, f)?;
    let kernel = LimitKernel::new(&mesh, spec, &hq, f);
    let (values, stats) = match solver::damped_newton(&kernel, opts, fnorm) {
        Ok(v) => v,
        Err(SolveFailure::Kernel(e)) => return Err(e),
        Err(SolveFailure::NotConverged(un)) => {
            return Err(LimitError::NonConvergence {
                iterations: un.stats.iterations,
                residual: un.stats.residual.as_f64(),
                tolerance: un.stats.tolerance.as_f64(),
            })
        }
    };
    let u0 = Field::new(mesh.clone(), values)?;
    let mut quad = Vec::new();
    let mut worst = T::zero();
    for t in 0..mesh.triangle_count() {
        if mesh.region_tags[t] != RegionTag::OmegaPlus {
            continue;
        }
        let d = u0.gradient(t)[1];
        let tri = mesh.triangle_points(t);
        for (q, (p, _, _)) in MID_EDGE.points(&tri).enumerate() {
            let h = hq.at(t)[q];
            let qbar = spec.solve_a1_root(p, d)?;
            worst = worst.max((h * spec.a1(p, qbar, d)).abs());
            quad.push(QuadRecord { triangle: t, x: p, h, qbar, d2u0: d });
        }
    }
    if worst > T::lit(CONSTRAINT_TOL) {
        return Err(LimitError::ConstraintViolation(worst.as_f64()));
    }
    Ok(LimitSolution { u0, quad, constraint_residual: worst, stats })
}

/// `|f|` in the weighted space: `(int_{Omega-} f^2 + int_{Omega+} h f^2)^(1/2)`.
fn weighted_source_norm<T: Real, F: Fn(Point<T>) -> T>(
    mesh: &Mesh<T>,
    density: &DensityField<T>,
    f: &F,
) -> Result<T, GeometryError> {
    if !mesh.region_tags.contains(&RegionTag::OmegaPlus) {
        return Ok(source_l2(mesh, f));
    }
    let hq = DensityQuadrature::new(mesh, density, SEVEN_POINT)?;
    Ok(hq.integrate(mesh, None, |_, p, _| f(p) * f(p)).sqrt())
}

/// `(lhs, rhs)` of the weighted energy identity, `phi = u0` in the limit weak form,
/// with the assembly quadrature.
pub fn limit_energy_identity<T: Real, F: Fn(Point<T>) -> T + Sync>(
    sol: &LimitSolution<T>,
    spec: &OperatorSpec<T>,
    density: &DensityField<T>,
    f: &F,
) -> Result<(T, T), LimitError> {
    let mesh = sol.u0.mesh();
    let hq = DensityQuadrature::new(mesh, density, MID_EDGE)?;
    let u = &sol.u0;
    let mut lhs = T::zero();
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle_points(t);
        let area = signed_area(&tri);
        let grad = u.gradient(t);
        for (q, (p, _, w)) in MID_EDGE.points(&tri).enumerate() {
            let term = if mesh.region_tags[t] == RegionTag::OmegaPlus {
                let h = hq.at(t)[q];
                if h < T::lit(H_CUTOFF) {
                    T::zero()
                } else {
                    h * spec.effective_a2(p, grad[1])? * grad[1]
                }
            } else {
                let a = spec.evaluate(p, grad);
                a[0] * grad[0] + a[1] * grad[1]
            };
            lhs += w * area * term;
        }
    }
    let rhs = hq.integrate(mesh, None, |t, p, l| f(p) * u.eval_in(t, l));
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_residual, solve_nonlinear};
    use crate::geometry::{build_mesh_eps, build_mesh_limit, Eps, EtaProfile, VertexTag};

    fn sine() -> EtaProfile<f64> {
        EtaProfile::sine_bump(1.0, 1.0).unwrap()
    }

    fn limit_setup(nx: usize, nm: usize, np: usize) -> (Arc<Mesh<f64>>, DensityField<f64>) {
        let p = sine();
        (Arc::new(build_mesh_limit(&p, nx, nm, np).unwrap().mesh), DensityField::new(p))
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (m, d) = limit_setup(8, 6, 6);
        let spec = OperatorSpec::radial_regularized();
        let sol = solve_limit(m, &spec, &d, &|_| 0.0, &SolverOptions::default()).unwrap();
        assert!(sol.u0.values().iter().all(|v| *v == 0.0));
        assert!(sol.quad.iter().all(|r| r.qbar == 0.0));
    }

    #[test]
    fn identity_operator_plus_block_is_weighted_vertical_laplacian() {
        let (m, d) = limit_setup(8, 6, 6);
        let hq = DensityQuadrature::new(&m, &d, MID_EDGE).unwrap();
        let u = Field::interpolate(m.clone(), |x| x[1] * x[1] + 0.3 * x[0] * x[1]);
        let f = |_: Point<f64>| 0.0;
        let r = assemble_limit_residual(&m, &OperatorSpec::identity(), &hq, &u, &f).unwrap();
        // oracle: int h d2u d2phi on Omega+ plus the full Laplacian form on Omega-
        let mut expect = vec![0.0; m.vertex_count()];
        for t in 0..m.triangle_count() {
            let tri = m.triangle_points(t);
            let (g, area) = p1_gradients(&tri);
            let gu = u.gradient(t);
            for (q, _) in MID_EDGE.points(&tri).enumerate() {
                let plus = m.region_tags[t] == RegionTag::OmegaPlus;
                for k in 0..3 {
                    let v = if plus {
                        hq.at(t)[q] * gu[1] * g[k][1]
                    } else {
                        gu[0] * g[k][0] + gu[1] * g[k][1]
                    };
                    expect[m.triangles[t][k]] += area / 3.0 * v;
                }
            }
        }
        for (v, tag) in m.vertex_tags.iter().enumerate() {
            if *tag != VertexTag::GammaB {
                assert!((r[v] - expect[v]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_profile_matches_eps_problem() {
        let p = EtaProfile::constant(1.0).unwrap();
        let lm = Arc::new(build_mesh_limit(&p, 8, 8, 8).unwrap().mesh);
        let em = Arc::new(build_mesh_eps(&p, Eps::from_k(1).unwrap(), 8, 8).unwrap());
        let d = DensityField::new(p);
        let spec = OperatorSpec::radial_atan();
        let f = |x: Point<f64>| 1.0 + x[0] * x[1];
        let u = Field::interpolate(lm.clone(), |x| x[1] * (1.0 + x[0]));
        let hq = DensityQuadrature::new(&lm, &d, MID_EDGE).unwrap();
        let rl = assemble_limit_residual(&lm, &spec, &hq, &u, &f).unwrap();
        let ue = Field::new(em.clone(), u.values().to_vec()).unwrap();
        let re = assemble_residual(&em, &spec, &ue, &f).unwrap();
        assert_eq!(rl, re);
        let sl = solve_limit(lm, &spec, &d, &f, &SolverOptions::default()).unwrap();
        let (se, _) = solve_nonlinear(em, &spec, &f, &SolverOptions::default()).unwrap();
        let diff = sl.u0.values().iter().zip(se.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn rejects_eps_mesh() {
        let p = sine();
        let em = Arc::new(build_mesh_eps(&p, Eps::from_k(2).unwrap(), 8, 4).unwrap());
        let r = solve_limit(em, &OperatorSpec::identity(), &DensityField::new(p), &|_| 1.0, &SolverOptions::default());
        assert!(matches!(r, Err(LimitError::MissingRegionTags)));
    }

    #[test]
    fn horizontal_terms_absent_on_plus_rows() {
        let (m, d) = limit_setup(8, 6, 6);
        let hq = DensityQuadrature::new(&m, &d, MID_EDGE).unwrap();
        let u = Field::interpolate(m.clone(), |x| x[1] + 0.5 * x[0]);
        let spec = OperatorSpec::linear([[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let f = |_: Point<f64>| 1.0;
        let (full, dofs) =
            assemble_limit_linearization(&m, &spec, &hq, &u, &f, StepMode::Newton, true).unwrap();
        let (nov, _) = assemble_limit_linearization(&m, &spec, &hq, &u, &f, StepMode::Newton, false).unwrap();
        for dd in 0..dofs.len() {
            let v = dofs.vertex(dd);
            let only_plus = m
                .triangles
                .iter()
                .enumerate()
                .filter(|(_, tri)| tri.contains(&v))
                .all(|(t, _)| m.region_tags[t] == RegionTag::OmegaPlus);
            if only_plus {
                assert!(nov.row(dd).all(|(_, x)| x == 0.0));
                // rows couple only to vertices of the same column
                for (c, x) in full.row(dd) {
                    if x != 0.0 {
                        assert_eq!(m.column_index[dofs.vertex(c)], m.column_index[v]);
                    }
                }
            }
        }
        assert!(full.asymmetry() < 1e-12);
    }

    #[test]
    fn constraint_and_energy_identity() {
        let (m, d) = limit_setup(8, 8, 12);
        let spec = OperatorSpec::linear([[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let f = |x: Point<f64>| 1.0 + 0.5 * x[0];
        let sol = solve_limit(m, &spec, &d, &f, &SolverOptions::default()).unwrap();
        assert!(sol.constraint_residual <= 1e-9);
        for r in &sol.quad {
            assert!(r.qbar.is_finite());
            assert!((r.qbar + 0.5 * r.d2u0).abs() < 1e-10 * (1.0 + r.d2u0.abs()));
        }
        let (lhs, rhs) = limit_energy_identity(&sol, &spec, &d, &f).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs(), "{lhs} {rhs}");
    }

    #[test]
    fn quad_csv_header() {
        let (m, d) = limit_setup(4, 4, 4);
        let sol = solve_limit(m, &OperatorSpec::identity(), &d, &|_| 1.0, &SolverOptions::default()).unwrap();
        let mut buf = Vec::new();
        sol.write_quad_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x1,x2,h,qbar,d2u0\n"));
        assert_eq!(s.lines().count(), 1 + sol.quad.len());
    }

    /// Closed-form density of the unit sine bump above height 1.
    fn h_sine(x2: f64) -> f64 {
        1.0 - 2.0 / std::f64::consts::PI * (x2 - 1.0).clamp(0.0, 1.0).sqrt().asin()
    }

    fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let hh = (b - a) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * g(a + i as f64 * hh)
            })
            .sum::<f64>()
            * hh
            / 3.0
    }

    #[test]
    fn one_dimensional_ode_oracle() {
        // x1-independent profile, identity operator, f = 1: u0 depends on x2 only,
        // -u'' = 1 below the interface and (h u')' = -h above it with h u' -> 0 at the top.
        let (m, d) = limit_setup(8, 16, 32);
        let sol = solve_limit(m, &OperatorSpec::identity(), &d, &|_| 1.0, &SolverOptions::default()).unwrap();
        let flux_above = |s: f64| simpson(h_sine, s, 2.0, 2000);
        let total = flux_above(1.0);
        assert!((total - 0.5).abs() < 1e-6);
        let below = |x2: f64| (1.0 + total) * x2 - x2 * x2 / 2.0;
        let above = |x2: f64| below(1.0) + simpson(|s| flux_above(s) / h_sine(s), 1.0, x2, 200);
        for &x2 in &[0.25, 0.5, 0.9, 1.2, 1.5, 1.8] {
            let exact = if x2 <= 1.0 { below(x2) } else { above(x2) };
            let got = sol.u0.point_eval([0.5, x2]).unwrap();
            assert!((got - exact).abs() < 5e-3, "x2={x2}: {got} vs {exact}");
        }
    }

    #[test]
    fn unique_from_random_starts() {
        use rand::{Rng, SeedableRng};
        let (m, d) = limit_setup(8, 6, 8);
        let spec = OperatorSpec::radial_regularized();
        let f = |x: Point<f64>| 1.0 + x[0];
        let base = solve_limit(m.clone(), &spec, &d, &f, &SolverOptions::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let init: Vec<f64> = m
                .vertex_tags
                .iter()
                .map(|t| if *t == VertexTag::GammaB { 0.0 } else { rng.gen_range(-1.0..1.0) })
                .collect();
            let opts = SolverOptions { initial: Some(init), ..SolverOptions::default() };
            let s = solve_limit(m.clone(), &spec, &d, &f, &opts).unwrap();
            let diff = s.u0.values().iter().zip(base.u0.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "{diff}");
        }
    }
}
