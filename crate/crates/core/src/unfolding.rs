//! Periodic unfolding `T_eps v(x, y) = v(eps [x1 / eps] + eps y, x2)` sampled on a
//! masked tensor lattice over `Omega_u+ = {eta_-(x1) < x2 < eta(x1, y)}`.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{integrate_field, FemError, Field, Integrand, Region};
use crate::geometry::{Eps, EtaProfile, GeometryError, Mesh};
use crate::operator::OperatorSpec;
use crate::scalar::{Point, Real};

/// Minimum lattice samples per periodicity cell in `x1`.
pub const MIN_SAMPLES_PER_CELL: usize = 4;
/// Default lattice `(x1, x2, y)`.
pub const DEFAULT_LATTICE: (usize, usize, usize) = (128, 64, 64);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnfoldError {
    #[error("field mesh has eps {mesh} but {requested} was requested")]
    EpsMeshMismatch { mesh: String, requested: Eps },
    #[error("lattice has {samples} x1 samples per eps-cell, at least {MIN_SAMPLES_PER_CELL} required")]
    GridTooCoarse { samples: f64 },
    #[error("fields live on different meshes")]
    MismatchedMeshes,
    #[error("lattice sizes must be positive")]
    EmptyGrid,
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Cell-centered lattice with analytic membership mask for `Omega_u+`.
#[derive(Clone, Debug)]
pub struct UnfoldGrid<T> {
    x1_nodes: Vec<T>,
    x2_nodes: Vec<T>,
    y_nodes: Vec<T>,
    dx2: T,
    /// `eta_-(x1_i)`.
    eta_minus: Vec<T>,
    /// `eta(x1_i, y_l)`, row-major in `i`.
    eta: Vec<T>,
    /// Masked `(i, j, l)` in lexicographic order.
    masked: Vec<[usize; 3]>,
}

impl<T: Real> UnfoldGrid<T> {
    pub fn new(profile: &EtaProfile<T>, n1: usize, n2: usize, ny: usize) -> Result<Self, UnfoldError> {
        Self::build(profile, n1, n2, ny, |x1, y| profile.eval(x1, y))
    }

    /// Grid whose membership mask uses `top(x1, y)` in place of `eta`, e.g. the top
    /// actually resolved by a family of `eps`-meshes.
    pub fn with_top(
        profile: &EtaProfile<T>,
        n1: usize,
        n2: usize,
        ny: usize,
        top: impl Fn(T, T) -> T,
    ) -> Result<Self, UnfoldError> {
        Self::build(profile, n1, n2, ny, top)
    }

    /// Grid for the profile as resolved by `eps`-meshes with `cells_per_period` columns per
    /// cell: `eta(x1, .)` is replaced by its periodic linear interpolant through
    /// `y = c / cells_per_period`. Geometric discretization of the top boundary then
    /// cancels between the two sides of the integral identity.
    pub fn resolved(
        profile: &EtaProfile<T>,
        n1: usize,
        n2: usize,
        ny: usize,
        cells_per_period: usize,
    ) -> Result<Self, UnfoldError> {
        if cells_per_period == 0 {
            return Err(UnfoldError::EmptyGrid);
        }
        let c = T::from_count(cells_per_period);
        Self::build(profile, n1, n2, ny, |x1, y| {
            let s = y * c;
            let j = s.floor();
            let t = s - j;
            profile.eval(x1, j / c) * (T::one() - t) + profile.eval(x1, (j + T::one()) / c) * t
        })
    }

    fn build(
        profile: &EtaProfile<T>,
        n1: usize,
        n2: usize,
        ny: usize,
        top: impl Fn(T, T) -> T,
    ) -> Result<Self, UnfoldError> {
        if n1 == 0 || n2 == 0 || ny == 0 {
            return Err(UnfoldError::EmptyGrid);
        }
        let centers = |n: usize| -> Vec<T> {
            (0..n).map(|i| (T::from_count(i) + T::lit(0.5)) / T::from_count(n)).collect()
        };
        let x1_nodes = centers(n1);
        let y_nodes = centers(ny);
        let eta_minus: Vec<T> = x1_nodes.iter().map(|&x| profile.envelopes(x).0).collect();
        let eta: Vec<T> = x1_nodes
            .iter()
            .flat_map(|&x| y_nodes.iter().map(|&y| top(x, y)).collect::<Vec<_>>())
            .collect();
        let lo = eta_minus.iter().copied().fold(T::infinity(), T::min);
        let hi = eta.iter().copied().fold(T::neg_infinity(), T::max);
        let dx2 = (hi - lo) / T::from_count(n2);
        let x2_nodes: Vec<T> = centers(n2).into_iter().map(|s| lo + s * (hi - lo)).collect();
        let mut masked = Vec::new();
        for i in 0..n1 {
            for (j, &x2) in x2_nodes.iter().enumerate() {
                for l in 0..ny {
                    if eta_minus[i] < x2 && x2 < eta[i * ny + l] {
                        masked.push([i, j, l]);
                    }
                }
            }
        }
        Ok(UnfoldGrid { x1_nodes, x2_nodes, y_nodes, dx2, eta_minus, eta, masked })
    }

    pub fn with_default_lattice(profile: &EtaProfile<T>) -> Result<Self, UnfoldError> {
        let (a, b, c) = DEFAULT_LATTICE;
        Self::new(profile, a, b, c)
    }

    pub fn x1_nodes(&self) -> &[T] {
        &self.x1_nodes
    }

    pub fn x2_nodes(&self) -> &[T] {
        &self.x2_nodes
    }

    pub fn y_nodes(&self) -> &[T] {
        &self.y_nodes
    }

    pub fn masked_count(&self) -> usize {
        self.masked.len()
    }

    pub fn is_masked(&self, i: usize, j: usize, l: usize) -> bool {
        let x2 = self.x2_nodes[j];
        self.eta_minus[i] < x2 && x2 < self.eta[i * self.y_nodes.len() + l]
    }

    /// `(x1, x2, y)` of the `n`-th masked point.
    pub fn point(&self, n: usize) -> [T; 3] {
        let [i, j, l] = self.masked[n];
        [self.x1_nodes[i], self.x2_nodes[j], self.y_nodes[l]]
    }

    fn column_weight(&self) -> T {
        T::one() / T::from_count(self.x1_nodes.len() * self.y_nodes.len())
    }

    /// Measure of lattice cell `(i, j, l)` inside `Omega_u+`: exact in `x2`, midpoint in `(x1, y)`.
    pub fn cell_weight(&self, i: usize, j: usize, l: usize) -> T {
        let half = self.dx2 / T::lit(2.0);
        let a = (self.x2_nodes[j] - half).max(self.eta_minus[i]);
        let b = (self.x2_nodes[j] + half).min(self.eta[i * self.y_nodes.len() + l]);
        (b - a).max(T::zero()) * self.column_weight()
    }

    /// Sum of all cell weights; approximates `int_{Omega+} h dx` to second order.
    pub fn mask_measure(&self) -> T {
        let (n1, n2, ny) = (self.x1_nodes.len(), self.x2_nodes.len(), self.y_nodes.len());
        let mut total = T::zero();
        for i in 0..n1 {
            for l in 0..ny {
                for j in 0..n2 {
                    total += self.cell_weight(i, j, l);
                }
            }
        }
        total
    }

    fn check_eps(&self, mesh: &Mesh<T>, eps: Eps) -> Result<(), UnfoldError> {
        if mesh.eps() != Some(eps) {
            let mesh = mesh.eps().map_or_else(|| "none".to_string(), |e| e.to_string());
            return Err(UnfoldError::EpsMeshMismatch { mesh, requested: eps });
        }
        let samples = self.x1_nodes.len() as f64 / eps.k() as f64;
        if samples < MIN_SAMPLES_PER_CELL as f64 {
            return Err(UnfoldError::GridTooCoarse { samples });
        }
        Ok(())
    }

    /// Lattice-column quadrature of the unfolded field over `Omega_u+`: midpoint in
    /// `(x1, y)`, two-point Gauss on each linear piece of the vertical line in `x2`.
    /// `g(triangle, bary)` is evaluated at the unfolded target; targets outside the
    /// mesh contribute zero.
    fn column_integral(&self, mesh: &Mesh<T>, eps: Eps, g: impl Fn(usize, [T; 3]) -> T + Sync) -> T {
        let ny = self.y_nodes.len();
        let gauss = T::lit(0.5 / 3f64.sqrt());
        let half = T::lit(0.5);
        let cols: Vec<T> = (0..self.x1_nodes.len() * ny)
            .into_par_iter()
            .map(|c| {
                let (i, l) = (c / ny, c % ny);
                let x1t = eps.unfold_x1(self.x1_nodes[i], self.y_nodes[l]);
                let (a, b) = (self.eta_minus[i], self.eta[c]);
                let breaks = mesh.vertical_breaks(x1t);
                let top = *breaks.last().expect("nonempty");
                let b = b.min(top);
                if b <= a {
                    return T::zero();
                }
                let mut knots = vec![a];
                knots.extend(breaks.iter().copied().filter(|&z| z > a && z < b));
                knots.push(b);
                let mut acc = T::zero();
                for w in knots.windows(2) {
                    let (z0, z1) = (w[0], w[1]);
                    let len = z1 - z0;
                    if len <= T::zero() {
                        continue;
                    }
                    let mid = (z0 + z1) * half;
                    for s in [-gauss, gauss] {
                        if let Some(loc) = mesh.locate([x1t, mid + s * len]) {
                            acc += half * len * g(loc.triangle, loc.bary);
                        }
                    }
                }
                acc
            })
            .collect();
        cols.into_iter().sum::<T>() * self.column_weight()
    }

    /// `int_{Omega_u+} T_eps v dx dy`.
    pub fn integrate_unfolded(&self, v: &Field<T>, eps: Eps) -> Result<T, UnfoldError> {
        self.check_eps(v.mesh(), eps)?;
        Ok(self.column_integral(v.mesh(), eps, |t, l| v.eval_in(t, l)))
    }

    /// `(|T_eps u|_{L2}, |T_eps grad u|_{L2}, |T_eps A(x, grad u)|_{L2})` on `Omega_u+`.
    pub fn unfolded_norms(&self, u: &Field<T>, eps: Eps, spec: &OperatorSpec<T>) -> Result<[T; 3], UnfoldError> {
        self.check_eps(u.mesh(), eps)?;
        let mesh = u.mesh();
        let val = self.column_integral(mesh, eps, |t, l| {
            let z = u.eval_in(t, l);
            z * z
        });
        let grad = self.column_integral(mesh, eps, |t, _| {
            let g = u.gradient(t);
            g[0] * g[0] + g[1] * g[1]
        });
        let flux = self.column_integral(mesh, eps, |t, l| {
            let g = u.gradient(t);
            let p = crate::quadrature::map_bary(&mesh.triangle_points(t), l);
            let a = spec.evaluate(p, g);
            a[0] * a[0] + a[1] * a[1]
        });
        Ok([val.sqrt(), grad.sqrt(), flux.sqrt()])
    }

    /// `|T_eps chi_{Omega_eps+} - chi_{Omega_u+}|_{L1}` over the lattice columns, exact in `x2`.
    pub fn characteristic_gap(&self, mesh: &Mesh<T>, eps: Eps) -> Result<T, UnfoldError> {
        self.check_eps(mesh, eps)?;
        let ny = self.y_nodes.len();
        let mut total = T::zero();
        for i in 0..self.x1_nodes.len() {
            for l in 0..ny {
                let x1t = eps.unfold_x1(self.x1_nodes[i], self.y_nodes[l]);
                let (a0, b0) = (self.eta_minus[i], self.eta[i * ny + l]);
                let a1 = mesh.interface_at(x1t).unwrap_or_else(T::zero);
                let b1 = mesh.top_at(x1t).max(a1);
                let overlap = (b0.min(b1) - a0.max(a1)).max(T::zero());
                total += (b0 - a0) + (b1 - a1) - overlap - overlap;
            }
        }
        Ok(total * self.column_weight())
    }
}

/// Samples of `T_eps v` at the masked lattice points, in grid order.
#[derive(Clone, Debug, PartialEq)]
pub struct Unfolded<T> {
    pub eps: Eps,
    pub values: Vec<T>,
}

impl<T: Real> Unfolded<T> {
    /// `x1,x2,y,value` rows with a header.
    pub fn write_csv<W: Write>(&self, grid: &UnfoldGrid<T>, mut w: W) -> io::Result<()> {
        writeln!(w, "x1,x2,y,value")?;
        for (n, v) in self.values.iter().enumerate() {
            let [x1, x2, y] = grid.point(n);
            writeln!(w, "{x1:.17e},{x2:.17e},{y:.17e},{v:.17e}")?;
        }
        Ok(())
    }
}

fn target<T: Real>(grid: &UnfoldGrid<T>, eps: Eps, n: usize) -> Point<T> {
    let [x1, x2, y] = grid.point(n);
    [eps.unfold_x1(x1, y), x2]
}

fn sample_with<T: Real>(grid: &UnfoldGrid<T>, eps: Eps, g: impl Fn(Point<T>) -> T + Sync) -> Vec<T> {
    (0..grid.masked_count()).into_par_iter().map(|n| g(target(grid, eps, n))).collect()
}

/// Zero extension of `v` outside its mesh.
fn extended<T: Real>(v: &Field<T>, p: Point<T>) -> T {
    v.mesh().locate(p).map_or_else(T::zero, |loc| v.eval_in(loc.triangle, loc.bary))
}

/// `T_eps v` at every masked lattice point, with zero extension outside `Omega_eps`.
pub fn unfold_field<T: Real>(field: &Field<T>, eps: Eps, grid: &UnfoldGrid<T>) -> Result<Unfolded<T>, UnfoldError> {
    grid.check_eps(field.mesh(), eps)?;
    Ok(Unfolded { eps, values: sample_with(grid, eps, |p| extended(field, p)) })
}

/// `(lhs, rhs, gap)` with `lhs = int_{Omega_eps+} v` and `rhs = int_{Omega_u+} T_eps v`.
pub fn check_integral_lemma<T: Real>(v: &Field<T>, eps: Eps, grid: &UnfoldGrid<T>) -> Result<(T, T, T), UnfoldError> {
    let rhs = grid.integrate_unfolded(v, eps)?;
    let lhs = integrate_field(v.mesh(), Integrand::Value(v), |_| T::one(), Region::OmegaPlus)?;
    Ok((lhs, rhs, (lhs - rhs).abs()))
}

/// Largest deviations found by [`check_algebra`] and the number of samples behind each.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraReport<T> {
    pub product_samples: usize,
    pub product_max_err: T,
    pub linearity_max_err: T,
    pub x2_samples: usize,
    pub x2_max_err: T,
    pub y_samples: usize,
    pub y_max_err: T,
}

/// Relative finite-difference step, a fraction of the local element size.
const FD_FRACTION: f64 = 1e-2;
/// Samples whose barycentric coordinates fall below this are treated as on an edge.
const EDGE_MARGIN: f64 = 0.05;

/// Product rule, linearity, and the two derivative identities
/// `d/dx2 T u = T(d2 u)` and `d/dy T u = eps T(d1 u)` at masked lattice points.
/// Derivative identities use centered differences inside a single triangle.
pub fn check_algebra<T: Real>(
    u: &Field<T>,
    v: &Field<T>,
    eps: Eps,
    grid: &UnfoldGrid<T>,
) -> Result<AlgebraReport<T>, UnfoldError> {
    if !std::sync::Arc::ptr_eq(u.mesh(), v.mesh()) {
        return Err(UnfoldError::MismatchedMeshes);
    }
    grid.check_eps(u.mesh(), eps)?;
    let mesh = u.mesh();
    let tu = unfold_field(u, eps, grid)?;
    let tv = unfold_field(v, eps, grid)?;
    let tuv = sample_with(grid, eps, |p| extended(u, p) * extended(v, p));
    let product_max_err = tuv
        .iter()
        .zip(tu.values.iter().zip(&tv.values))
        .map(|(w, (a, b))| (*w - *a * *b).abs())
        .fold(T::zero(), T::max);
    let (a, b) = (T::lit(0.75), T::lit(-1.25));
    let lin = unfold_field(&u.combine(a, v, b)?, eps, grid)?;
    let linearity_max_err = lin
        .values
        .iter()
        .zip(tu.values.iter().zip(&tv.values))
        .map(|(w, (x, y))| (*w - (a * *x + b * *y)).abs())
        .fold(T::zero(), T::max);

    let epsv: T = eps.value();
    let margin = T::lit(EDGE_MARGIN);
    let checks: Vec<(Option<T>, Option<T>)> = (0..grid.masked_count())
        .into_par_iter()
        .map(|n| {
            let [x1, x2, y] = grid.point(n);
            let p = [eps.unfold_x1(x1, y), x2];
            let Some(loc) = mesh.locate(p) else { return (None, None) };
            if loc.bary.iter().any(|&c| c < margin) {
                return (None, None);
            }
            let t = loc.triangle;
            let tri = mesh.triangle_points(t);
            let size = (0..3)
                .map(|k| {
                    let (pa, pb) = (tri[k], tri[(k + 1) % 3]);
                    ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
                })
                .fold(T::infinity(), T::min);
            let grad = u.gradient(t);
            let inside = |q: Point<T>| mesh.locate(q).filter(|l| l.triangle == t).map(|l| u.eval_in(t, l.bary));
            let h2 = T::lit(FD_FRACTION) * size;
            let d2 = match (inside([p[0], x2 + h2]), inside([p[0], x2 - h2])) {
                (Some(up), Some(dn)) => Some(((up - dn) / (h2 + h2) - grad[1]).abs()),
                _ => None,
            };
            let hy = T::lit(FD_FRACTION) * size / epsv;
            let dy = match (
                inside([eps.unfold_x1(x1, y + hy), x2]),
                inside([eps.unfold_x1(x1, y - hy), x2]),
            ) {
                (Some(r), Some(l)) if y - hy > T::zero() && y + hy < T::one() => {
                    Some(((r - l) / (hy + hy) - epsv * grad[0]).abs())
                }
                _ => None,
            };
            (d2, dy)
        })
        .collect();
    let fold = |it: &mut dyn Iterator<Item = T>| it.fold((0usize, T::zero()), |(c, m), e| (c + 1, m.max(e)));
    let (x2_samples, x2_max_err) = fold(&mut checks.iter().filter_map(|c| c.0));
    let (y_samples, y_max_err) = fold(&mut checks.iter().filter_map(|c| c.1));
    Ok(AlgebraReport {
        product_samples: grid.masked_count(),
        product_max_err,
        linearity_max_err,
        x2_samples,
        x2_max_err,
        y_samples,
        y_max_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh_eps, DensityField, ProfileFamily};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn sine() -> EtaProfile<f64> {
        EtaProfile::sine_bump(1.0, 1.0).unwrap()
    }

    fn eps_mesh(k: usize) -> Arc<Mesh<f64>> {
        Arc::new(build_mesh_eps(&sine(), Eps::from_k(k).unwrap(), 16, 16).unwrap())
    }

    #[test]
    fn mask_matches_definition() {
        let p = sine();
        let g = UnfoldGrid::new(&p, 16, 16, 16).unwrap();
        let mut count = 0;
        for i in 0..16 {
            for j in 0..16 {
                for l in 0..16 {
                    let (x1, x2, y) = (g.x1_nodes()[i], g.x2_nodes()[j], g.y_nodes()[l]);
                    let inside = p.envelopes(x1).0 < x2 && x2 < p.eval(x1, y);
                    assert_eq!(g.is_masked(i, j, l), inside);
                    count += inside as usize;
                }
            }
        }
        assert_eq!(count, g.masked_count());
    }

    fn product() -> EtaProfile<f64> {
        EtaProfile::new(ProfileFamily::Product, vec![1.0, 0.5, 1.0, 1.0, 0.25], 256, None).unwrap()
    }

    #[test]
    fn mask_measure_is_second_order() {
        let p = product();
        let d = DensityField::new(p.clone());
        // oracle: int_{Omega+} h dx by composite Simpson in x1 and midpoint in x2
        let n = 400;
        let oracle: f64 = (0..=40)
            .map(|i| {
                let x1 = i as f64 / 40.0;
                let (lo, hi) = p.envelopes(x1);
                let col: f64 = (0..n)
                    .map(|j| d.h([x1, lo + (j as f64 + 0.5) / n as f64 * (hi - lo)]).unwrap())
                    .sum::<f64>()
                    * (hi - lo)
                    / n as f64;
                let w = if i == 0 || i == 40 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * col / 120.0
            })
            .sum();
        let err = |m: usize| (UnfoldGrid::new(&p, m, m, m).unwrap().mask_measure() - oracle).abs();
        // the column integrand is linear in x1 and a trigonometric polynomial in y,
        // which the midpoint rule integrates exactly
        assert!(err(8) < 1e-6 && err(16) < 1e-6);
        let flat = UnfoldGrid::new(&sine(), 8, 32, 32).unwrap().mask_measure();
        assert!((flat - 0.5).abs() < 1e-12);
    }

    #[test]
    fn x2_is_untouched() {
        let m = eps_mesh(8);
        let g = UnfoldGrid::new(&sine(), 64, 16, 16).unwrap();
        let u = Field::interpolate(m, |x| x[1]);
        let tu = unfold_field(&u, Eps::from_k(8).unwrap(), &g).unwrap();
        for (n, v) in tu.values.iter().enumerate() {
            let [_, x2, _] = g.point(n);
            assert!(*v == 0.0 || (v - x2).abs() < 1e-14);
        }
    }

    #[test]
    fn unfolded_x1_example() {
        let e = Eps::from_k(8).unwrap();
        assert!((e.unfold_x1(0.3f64, 0.5) - 0.3125).abs() < 1e-15);
        let m = eps_mesh(8);
        let u = Field::interpolate(m, |x| x[0]);
        assert!((u.point_eval([e.unfold_x1(0.3, 0.5), 1.0]).unwrap() - 0.3125).abs() < 1e-14);
    }

    #[test]
    fn eps_mismatch_and_coarse_grid() {
        let m = eps_mesh(8);
        let u = Field::interpolate(m, |x| x[0]);
        let g = UnfoldGrid::new(&sine(), 64, 8, 8).unwrap();
        assert!(matches!(
            unfold_field(&u, Eps::from_k(4).unwrap(), &g),
            Err(UnfoldError::EpsMeshMismatch { .. })
        ));
        let coarse = UnfoldGrid::new(&sine(), 16, 8, 8).unwrap();
        assert!(matches!(
            unfold_field(&u, Eps::from_k(8).unwrap(), &coarse),
            Err(UnfoldError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn lemma_for_constants() {
        let e = Eps::from_k(4).unwrap();
        let m = eps_mesh(4);
        let g = UnfoldGrid::resolved(&sine(), 64, 32, 64, 16).unwrap();
        let (l0, r0, gap0) = check_integral_lemma(&Field::zeros(m.clone()), e, &g).unwrap();
        assert_eq!((l0, r0, gap0), (0.0, 0.0, 0.0));
        let one = Field::interpolate(m.clone(), |_| 1.0);
        let (lhs, rhs, gap) = check_integral_lemma(&one, e, &g).unwrap();
        assert!((lhs - 0.5).abs() < 1e-12);
        assert!(gap < 1e-12, "{lhs} {rhs}");
        // with the exact profile the gap is the area between the top and its interpolant
        let exact = UnfoldGrid::new(&sine(), 64, 32, 64).unwrap();
        let (_, _, g2) = check_integral_lemma(&one, e, &exact).unwrap();
        assert!(g2 > 1e-4 && g2 < 1e-2);
    }

    #[test]
    fn characteristic_functions_converge() {
        let p = product();
        let g = UnfoldGrid::resolved(&p, 128, 16, 64, 16).unwrap();
        let gaps: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&k| {
                let e = Eps::from_k(k).unwrap();
                let m = build_mesh_eps(&p, e, 16, 8).unwrap();
                g.characteristic_gap(&m, e).unwrap()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < 0.7 * w[0]), "{gaps:?}");
        let flat = UnfoldGrid::resolved(&sine(), 64, 16, 64, 16).unwrap();
        let e = Eps::from_k(4).unwrap();
        assert!(flat.characteristic_gap(&eps_mesh(4), e).unwrap() < 1e-12);
    }

    #[test]
    fn algebra_on_interpolants() {
        let e = Eps::from_k(4).unwrap();
        let m = eps_mesh(4);
        let g = UnfoldGrid::new(&sine(), 64, 32, 32).unwrap();
        let u = Field::interpolate(m.clone(), |x| x[1]);
        let v = Field::interpolate(m.clone(), |x| (3.0 * x[0]).sin() * x[1]);
        let r = check_algebra(&u, &v, e, &g).unwrap();
        assert_eq!(r.product_max_err, 0.0);
        assert!(r.linearity_max_err < 1e-14);
        assert!(r.x2_samples > 100 && r.x2_max_err < 1e-10);
        assert!(r.y_samples > 100 && r.y_max_err < 1e-9, "{r:?}");
    }

    #[test]
    fn csv_export() {
        let e = Eps::from_k(4).unwrap();
        let m = eps_mesh(4);
        let g = UnfoldGrid::new(&sine(), 16, 4, 4).unwrap();
        let tu = unfold_field(&Field::interpolate(m, |x| x[0]), e, &g).unwrap();
        let mut buf = Vec::new();
        tu.write_csv(&g, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x1,x2,y,value\n"));
        assert_eq!(s.lines().count(), 1 + g.masked_count());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.0f64..5.0) {
            let e = Eps::from_k(4).unwrap();
            let m = eps_mesh(4);
            let g = UnfoldGrid::new(&sine(), 32, 8, 8).unwrap();
            let u = Field::interpolate(m.clone(), |x| (c * x[0]).cos() + x[1]);
            let v = Field::interpolate(m.clone(), |x| x[0] * x[1] - c);
            let w = unfold_field(&u.combine(a, &v, b).unwrap(), e, &g).unwrap();
            let (tu, tv) = (unfold_field(&u, e, &g).unwrap(), unfold_field(&v, e, &g).unwrap());
            for n in 0..g.masked_count() {
                let lin = a * tu.values[n] + b * tv.values[n];
                prop_assert!((w.values[n] - lin).abs() <= 1e-13 * (1.0 + lin.abs()));
            }
        }
    }
}
