//! Wall-conforming meshes of the oscillating domain for profiles independent of `x1`.
//!
//! `Omega-` is a `(k cpp) x nm` grid of flat rows. Above `eta_-` every period carries one
//! finger: flat levels `z_j` with `cpp + 1` nodes spread evenly between the two walls
//! `x1 = eps (m + left_j)` and `x1 = eps (m + right_j)`, closed by a fan into the tip.
//! Element angles stay bounded as `eps -> 0` because nodes follow the walls.
//!
//! Vertices: the grid row-major (`r (nx + 1) + i`), then finger levels `1..np` of each
//! finger (`cpp + 1` nodes each), then the tips. Triangles: grid cell `(i, r)` gives
//! `2 (r nx + i)` and `+1`, split along the rising diagonal left of the period centre and
//! along the falling one right of it; finger strips follow the same pattern, the last strip of each finger being the tip fan `[p_i, p_i+1, tip]`.

use super::{Eps, EtaProfile, GeometryError};
use crate::numeric::bisect;
use crate::scalar::{Point, Real};

const MIN_LAYER: f64 = 1e-12;
const WALL_TOL: f64 = 1e-14;
const MIN_AT_ZERO_TOL: f64 = 1e-6;

/// Levels and wall positions shared by every finger (independent of `eps`).
#[derive(Clone, Debug, PartialEq)]
pub struct FingerLevels<T> {
    /// Rows of `Omega-` from `0` to `eta_-`.
    pub minus: Vec<T>,
    /// Finger levels from `eta_-` to the tip `eta_+`; empty when `eta` is constant.
    pub plus: Vec<T>,
    /// Left wall at each finger level, in units of the period (0 at the base, `y_max` at the tip).
    pub left: Vec<T>,
    /// Right wall, from 1 at the base to `y_max` at the tip.
    pub right: Vec<T>,
}

impl<T: Real> FingerLevels<T> {
    /// Levels with spacing close to `eta_+ / ny` in both layers.
    ///
    /// Needs an `x1`-independent profile whose minimum sits at `y = 0`, so that each
    /// finger's base is exactly one period.
    pub fn new(profile: &EtaProfile<T>, ny: usize) -> Result<Self, GeometryError> {
        if ny < 4 {
            return Err(GeometryError::ResolutionTooCoarse(format!("ny = {ny} < 4")));
        }
        if !profile.is_x1_independent() {
            return Err(GeometryError::InvalidProfile("finger meshes need eta independent of x1".into()));
        }
        let e = profile.extrema(T::zero());
        let (lo, hi) = (e.eta_minus, e.eta_plus);
        let dz = hi / T::from_count(ny);
        let nm = (lo / dz).round().to_usize().unwrap_or(1).max(1);
        let minus = uniform(T::zero(), lo, nm);
        if hi - lo < T::tol(MIN_LAYER) {
            return Ok(FingerLevels { minus, plus: Vec::new(), left: Vec::new(), right: Vec::new() });
        }
        let y0 = e.y_min - e.y_min.round();
        // a located minimum is only accurate to about sqrt(epsilon)
        if y0.abs() > T::tol(MIN_AT_ZERO_TOL).max(T::epsilon().sqrt() * T::lit(16.0)) {
            return Err(GeometryError::InvalidProfile(format!(
                "finger meshes need the minimum of eta at y = 0, found y = {}",
                e.y_min
            )));
        }
        let ymax = e.y_max - e.y_max.floor();
        let np = ((hi - lo) / dz).ceil().to_usize().unwrap_or(2).max(2);
        let plus = uniform(lo, hi, np);
        let tol = T::tol(WALL_TOL);
        let mut left = Vec::with_capacity(np + 1);
        let mut right = Vec::with_capacity(np + 1);
        for (j, &z) in plus.iter().enumerate() {
            let (l, r) = if j == 0 {
                (T::zero(), T::one())
            } else if j == np {
                (ymax, ymax)
            } else {
                let g = |y: T| profile.eval(T::zero(), y) - z;
                (bisect(g, T::zero(), ymax, tol), bisect(g, ymax, T::one(), tol))
            };
            left.push(l);
            right.push(r);
        }
        Ok(FingerLevels { minus, plus, left, right })
    }

    /// Number of finger strips (0 when `Omega+` is empty).
    pub fn strips(&self) -> usize {
        self.plus.len().saturating_sub(1)
    }

    pub fn eta_minus(&self) -> T {
        *self.minus.last().expect("at least one row")
    }

    /// Fraction of the period inside the domain at height `x2`, linear between levels.
    pub fn width_at(&self, x2: T) -> T {
        if self.plus.is_empty() || x2 <= self.eta_minus() {
            return T::one();
        }
        let top = *self.plus.last().expect("nonempty");
        if x2 >= top {
            return T::zero();
        }
        let j = (self.plus.partition_point(|z| *z <= x2) - 1).min(self.strips() - 1);
        let s = (x2 - self.plus[j]) / (self.plus[j + 1] - self.plus[j]);
        let w = |j: usize| self.right[j] - self.left[j];
        w(j) * (T::one() - s) + w(j + 1) * s
    }

    /// Height of the finger wall over the cell coordinate `y` in `[0, 1]`.
    pub fn top_local(&self, y: T) -> T {
        if self.plus.is_empty() {
            return self.eta_minus();
        }
        let n = self.strips();
        let ymax = self.left[n];
        let on_wall = |a: T, b: T, j: usize| {
            if b == a {
                self.plus[j + 1]
            } else {
                self.plus[j] + (y - a) / (b - a) * (self.plus[j + 1] - self.plus[j])
            }
        };
        if y <= ymax {
            let j = self.left.partition_point(|l| *l <= y).saturating_sub(1).min(n - 1);
            on_wall(self.left[j], self.left[j + 1], j)
        } else {
            let j = self.right.partition_point(|r| *r > y).saturating_sub(1).min(n - 1);
            on_wall(self.right[j], self.right[j + 1], j)
        }
    }
}

/// Quads left of a period's centre are split along the rising diagonal, the others along
/// the falling one, so the mesh is symmetric about every period centre.
fn rising(q: usize, cpp: usize) -> bool {
    2 * q < cpp
}

fn uniform<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    (0..=n).map(|j| if j == n { b } else { a + (b - a) * T::from_count(j) / T::from_count(n) }).collect()
}

/// Index data of a finger mesh.
#[derive(Clone, Debug)]
pub struct FingerStrips<T> {
    pub k: usize,
    pub cpp: usize,
    pub eps: Eps,
    pub levels: FingerLevels<T>,
    pub interface: Vec<T>,
    pub tops: Vec<T>,
    plus_tri_start: usize,
}

pub(super) struct FingerParts<T> {
    pub vertices: Vec<Point<T>>,
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<super::VertexTag>,
    pub column_index: Vec<usize>,
    pub strips: FingerStrips<T>,
}

pub(super) fn build<T: Real>(levels: FingerLevels<T>, eps: Eps, cpp: usize) -> FingerParts<T> {
    use super::VertexTag as V;
    let k = eps.k();
    let nx = k * cpp;
    let nm = levels.minus.len() - 1;
    let np = levels.strips();
    let col_x = |i: usize| T::from_count(i) / T::from_count(nx);
    let mut vertices = Vec::new();
    let mut tags = Vec::new();
    let mut column_index = Vec::new();
    for (r, &z) in levels.minus.iter().enumerate() {
        for i in 0..=nx {
            vertices.push([col_x(i), z]);
            column_index.push(i);
            tags.push(match r {
                0 => V::GammaB,
                _ if r == nm && (np == 0 || i % cpp == 0) => V::Top,
                _ if i == 0 || i == nx => V::Lateral,
                _ => V::Interior,
            });
        }
    }
    let plus_vertex_start = vertices.len();
    let cppf = T::from_count(cpp);
    for m in 0..k {
        for j in 1..np {
            let (l, r) = (levels.left[j], levels.right[j]);
            for i in 0..=cpp {
                let y = l + (r - l) * T::from_count(i) / cppf;
                vertices.push([eps.value::<T>() * (T::from_count(m) + y), levels.plus[j]]);
                column_index.push(nx + 1 + column_index.len() - plus_vertex_start);
                tags.push(if i == 0 || i == cpp { V::Top } else { V::Interior });
            }
        }
    }
    let tip_start = vertices.len();
    if np > 0 {
        for m in 0..k {
            vertices.push([eps.value::<T>() * (T::from_count(m) + levels.left[np]), levels.plus[np]]);
            column_index.push(nx + 1 + column_index.len() - plus_vertex_start);
            tags.push(V::Top);
        }
    }
    let vid = |i: usize, r: usize| r * (nx + 1) + i;
    let mut triangles = Vec::new();
    for r in 0..nm {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, r), vid(i + 1, r), vid(i, r + 1), vid(i + 1, r + 1));
            if rising(i % cpp, cpp) {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    let plus_tri_start = triangles.len();
    let node = |m: usize, j: usize, i: usize| {
        if j == 0 {
            vid(m * cpp + i, nm)
        } else if j == np {
            tip_start + m
        } else {
            plus_vertex_start + (m * (np - 1) + j - 1) * (cpp + 1) + i
        }
    };
    for m in 0..k {
        for j in 0..np {
            for i in 0..cpp {
                if j + 1 == np {
                    triangles.push([node(m, j, i), node(m, j, i + 1), node(m, np, 0)]);
                } else {
                    let (p0, p1, q0, q1) = (node(m, j, i), node(m, j, i + 1), node(m, j + 1, i), node(m, j + 1, i + 1));
                    if rising(i, cpp) {
                        triangles.push([p0, p1, q1]);
                        triangles.push([p0, q1, q0]);
                    } else {
                        triangles.push([p0, p1, q0]);
                        triangles.push([p1, q1, q0]);
                    }
                }
            }
        }
    }
    let interface = vec![levels.eta_minus(); nx + 1];
    let tops = (0..=nx)
        .map(|i| if i == nx { levels.top_local(T::zero()) } else { levels.top_local(T::from_count(i % cpp) / cppf) })
        .collect();
    FingerParts {
        vertices,
        triangles,
        tags,
        column_index,
        strips: FingerStrips { k, cpp, eps, levels, interface, tops, plus_tri_start },
    }
}

impl<T: Real> FingerStrips<T> {
    pub fn nx(&self) -> usize {
        self.k * self.cpp
    }

    pub fn rows(&self) -> usize {
        self.levels.minus.len() - 1 + self.levels.strips()
    }

    /// Finger index and cell coordinate of `x1`.
    fn cell(&self, x1: T) -> (usize, T) {
        let s = x1.max(T::zero()).min(T::one()) * T::from_count(self.k);
        let m = s.floor().to_usize().unwrap_or(0).min(self.k - 1);
        (m, s - T::from_count(m))
    }

    pub fn top_at(&self, x1: T) -> T {
        let (_, y) = self.cell(x1);
        self.levels.top_local(y)
    }

    /// Triangles possibly containing `(x1, x2)`; `i, lam` locate `x1` among the grid columns.
    pub(super) fn candidates(&self, x1: T, x2: T, i: usize, tol: T) -> Vec<usize> {
        let nx = self.nx();
        let lv = &self.levels;
        let mut out = Vec::new();
        let nm = lv.minus.len() - 1;
        if x2 <= lv.eta_minus() + tol {
            let r = lv.minus.partition_point(|z| *z <= x2).saturating_sub(1).min(nm - 1);
            for rr in [r, r.saturating_sub(1), (r + 1).min(nm - 1)] {
                out.extend([2 * (rr * nx + i), 2 * (rr * nx + i) + 1]);
            }
        }
        let np = lv.strips();
        if np == 0 || x2 < lv.eta_minus() - tol {
            return out;
        }
        let (m, y) = self.cell(x1);
        let j = lv.plus.partition_point(|z| *z <= x2).saturating_sub(1).min(np - 1);
        let s = ((x2 - lv.plus[j]) / (lv.plus[j + 1] - lv.plus[j])).max(T::zero()).min(T::one());
        let l = lv.left[j] * (T::one() - s) + lv.left[j + 1] * s;
        let r = lv.right[j] * (T::one() - s) + lv.right[j + 1] * s;
        let q = if r > l { ((y - l) / (r - l) * T::from_count(self.cpp)).floor() } else { T::zero() };
        let q = q.max(T::zero()).to_usize().unwrap_or(0).min(self.cpp - 1);
        let per_finger = 2 * self.cpp * (np - 1) + self.cpp;
        let base = self.plus_tri_start + m * per_finger;
        for jj in [j, j.saturating_sub(1), (j + 1).min(np - 1)] {
            for qq in [q, q.saturating_sub(1), (q + 1).min(self.cpp - 1)] {
                if jj + 1 == np {
                    out.push(base + 2 * self.cpp * jj + qq);
                } else {
                    out.extend([base + 2 * self.cpp * jj + 2 * qq, base + 2 * self.cpp * jj + 2 * qq + 1]);
                }
            }
        }
        out
    }

    /// Heights where the vertical line at `x1` crosses mesh edges, from 0 to the top.
    pub(super) fn breaks(&self, x1: T, i: usize, lam: T) -> Vec<T> {
        let lv = &self.levels;
        let nm = lv.minus.len() - 1;
        let mut out = Vec::with_capacity(2 * nm + 1);
        let along = if rising(i % self.cpp, self.cpp) { lam } else { T::one() - lam };
        for r in 0..=nm {
            out.push(lv.minus[r]);
            if r < nm && lam > T::zero() {
                out.push(lv.minus[r] + along * (lv.minus[r + 1] - lv.minus[r]));
            }
        }
        let np = lv.strips();
        if np == 0 {
            return out;
        }
        let (_, y) = self.cell(x1);
        let top = lv.top_local(y);
        let cpp = T::from_count(self.cpp);
        let pos = |j: usize, q: usize| lv.left[j] + (lv.right[j] - lv.left[j]) * T::from_count(q) / cpp;
        let mut cross = |xa: T, za: T, xb: T, zb: T| {
            if xa == xb {
                if xa == y {
                    out.push(za);
                    out.push(zb);
                }
            } else if (xa - y) * (xb - y) <= T::zero() {
                out.push(za + (y - xa) / (xb - xa) * (zb - za));
            }
        };
        for j in 0..np {
            let (za, zb) = (lv.plus[j], lv.plus[j + 1]);
            for q in 0..=self.cpp {
                let (p, t) = (pos(j, q), pos(j + 1, q));
                cross(p, za, t, zb);
                if q < self.cpp {
                    if rising(q, self.cpp) {
                        cross(p, za, pos(j + 1, q + 1), zb);
                    } else {
                        cross(pos(j, q + 1), za, t, zb);
                    }
                    cross(pos(j + 1, q), zb, pos(j + 1, q + 1), zb);
                }
            }
        }
        let eta_minus = lv.eta_minus();
        out.retain(|z| *z <= top && *z >= T::zero());
        out.push(top.max(eta_minus));
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite heights"));
        out.dedup_by(|b, a| *b - *a <= T::tol(1e-12) * a.abs().max(T::one()));
        out
    }
}
