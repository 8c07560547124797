//! Structured triangulations with vertical vertex columns.
//!
//! Graph and layered meshes store vertices row-major, `v = j * (nx + 1) + i` for column
//! `i` and row `j`; lattice cell `(i, j)` is split into triangles `2 (j nx + i)` =
//! `[v00, v10, v11]` and `2 (j nx + i) + 1` = `[v00, v11, v01]`, except on odd rows of
//! layered meshes, which use `[v00, v10, v01]` and `[v10, v11, v01]`.
//!
//! Level meshes store vertices column by column on flat rows shared by all columns, each
//! column ending at its own top node; the strip between two columns is triangulated by
//! merging the two height lists bottom to top.

use std::collections::HashMap;
use std::io::{self, Write};

use super::fingers::{self, FingerLevels, FingerStrips};
use super::{Eps, EtaProfile, GeometryError};
use crate::scalar::{Point, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexTag {
    Interior,
    GammaB,
    Lateral,
    Top,
    Interface,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionTag {
    OmegaMinus,
    OmegaPlus,
    EpsDomain,
}

impl VertexTag {
    pub fn as_str(self) -> &'static str {
        match self {
            VertexTag::Interior => "interior",
            VertexTag::GammaB => "gamma_b",
            VertexTag::Lateral => "lateral",
            VertexTag::Top => "top",
            VertexTag::Interface => "interface",
        }
    }
}

impl RegionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionTag::OmegaMinus => "omega_minus",
            RegionTag::OmegaPlus => "omega_plus",
            RegionTag::EpsDomain => "eps_domain",
        }
    }
}

/// How the lattice rows are mapped onto vertical coordinates.
#[derive(Clone, Debug)]
pub enum Layout<T> {
    /// Rows `t = j/ny` mapped to `t * tops[i]`. `interface[i]` is `eta_-` at the column
    /// when the mesh discretizes an oscillating domain.
    Graph { nx: usize, ny: usize, tops: Vec<T>, eps: Option<Eps>, interface: Option<Vec<T>> },
    /// Two stacked graph layers meeting on the row `ny_minus`.
    Layered { nx: usize, ny_minus: usize, ny_plus: usize, interface: Vec<T>, tops: Vec<T> },
    /// Flat rows `j * max(tops) / ny` below each column top.
    Levels(Box<LevelStrips<T>>),
    /// Grid below `eta_-` and wall-conforming fingers above it.
    Fingers(Box<FingerStrips<T>>),
}

/// Index data of a level mesh.
#[derive(Clone, Debug)]
pub struct LevelStrips<T> {
    pub nx: usize,
    pub ny: usize,
    pub tops: Vec<T>,
    pub eps: Eps,
    pub interface: Vec<T>,
    /// First triangle of each strip; `strip_start[nx]` is the triangle count.
    strip_start: Vec<usize>,
    /// Upper edge `(left, right)` of each triangle's position in its strip.
    rungs: Vec<[usize; 2]>,
    tri_column: Vec<usize>,
}

impl<T: Real> LevelStrips<T> {
    fn rung_height(&self, vertices: &[Point<T>], r: &[usize; 2], lam: T) -> T {
        vertices[r[0]][1] * (T::one() - lam) + vertices[r[1]][1] * lam
    }
}

/// Which structured triangulation `build_mesh_eps_with` produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsMeshStyle {
    /// Rows `t * eta(s, s/eps)` for `t = j/ny`.
    Graph,
    /// Flat rows, one top node per column.
    Levels,
    /// Nodes following the finger walls; `x1`-independent profiles with their minimum at `y = 0`.
    Fingers,
    /// Fingers where the profile allows them, Levels otherwise.
    #[default]
    Auto,
}

impl EpsMeshStyle {
    /// The concrete style used for `profile` with `ny` rows.
    pub fn resolve<T: Real>(self, profile: &EtaProfile<T>, ny: usize) -> EpsMeshStyle {
        match self {
            EpsMeshStyle::Auto if FingerLevels::new(profile, ny).is_ok() => EpsMeshStyle::Fingers,
            EpsMeshStyle::Auto => EpsMeshStyle::Levels,
            style => style,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub vertices: Vec<Point<T>>,
    pub triangles: Vec<[usize; 3]>,
    pub vertex_tags: Vec<VertexTag>,
    pub region_tags: Vec<RegionTag>,
    pub column_index: Vec<usize>,
    layout: Layout<T>,
}

/// A point located in a triangle, with its barycentric coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Location<T> {
    pub triangle: usize,
    pub bary: [T; 3],
}

/// Mesh plus a construction warning (degenerate upper layer).
#[derive(Clone, Debug)]
pub struct BuiltMesh<T> {
    pub mesh: Mesh<T>,
    pub warning: Option<String>,
}

const LOCATE_TOL: f64 = 1e-12;
const MIN_LAYER: f64 = 1e-12;

/// Mesh of the oscillating domain `0 < x2 < eta(x1, x1/eps)` by the graph map
/// `(s, t) -> (s, t eta(s, s/eps))` of the `(k cells_per_period) x ny` lattice.
pub fn build_mesh_eps<T: Real>(
    profile: &EtaProfile<T>,
    eps: Eps,
    cells_per_period: usize,
    ny: usize,
) -> Result<Mesh<T>, GeometryError> {
    build_mesh_eps_with(profile, eps, cells_per_period, ny, EpsMeshStyle::Graph)
}

/// Mesh of the oscillating domain in the requested style. With [`EpsMeshStyle::Levels`]
/// `ny` counts the rows of the tallest column.
pub fn build_mesh_eps_with<T: Real>(
    profile: &EtaProfile<T>,
    eps: Eps,
    cells_per_period: usize,
    ny: usize,
    style: EpsMeshStyle,
) -> Result<Mesh<T>, GeometryError> {
    build_mesh_eps_graded(profile, eps, cells_per_period, ny, style, 0)
}

/// As [`build_mesh_eps_with`]; for [`EpsMeshStyle::Levels`] with `per_eps > 0` the
/// levels are refined to spacing `eps / per_eps` across the band swept by `eta_-`
/// and coarsen geometrically (factor [`LEVEL_GROWTH`]) to the base spacing.
/// The Graph style ignores `per_eps`.
pub fn build_mesh_eps_graded<T: Real>(
    profile: &EtaProfile<T>,
    eps: Eps,
    cells_per_period: usize,
    ny: usize,
    style: EpsMeshStyle,
    per_eps: usize,
) -> Result<Mesh<T>, GeometryError> {
    if cells_per_period < 8 {
        return Err(GeometryError::ResolutionTooCoarse(format!(
            "cells_per_period = {cells_per_period} < 8"
        )));
    }
    if ny < 4 {
        return Err(GeometryError::ResolutionTooCoarse(format!("ny = {ny} < 4")));
    }
    let style = style.resolve(profile, ny);
    if style == EpsMeshStyle::Fingers {
        let parts = fingers::build(FingerLevels::new(profile, ny)?, eps, cells_per_period);
        let region_tags = vec![RegionTag::EpsDomain; parts.triangles.len()];
        return Ok(Mesh {
            vertices: parts.vertices,
            triangles: parts.triangles,
            vertex_tags: parts.tags,
            region_tags,
            column_index: parts.column_index,
            layout: Layout::Fingers(Box::new(parts.strips)),
        });
    }
    let nx = eps.k() * cells_per_period;
    let cpp = T::from_count(cells_per_period);
    let mut tops = Vec::with_capacity(nx + 1);
    let mut interface = Vec::with_capacity(nx + 1);
    for i in 0..=nx {
        let s = column_x1::<T>(i, nx);
        // fast variable s/eps taken from the integer lattice to avoid rounding drift
        let y = T::from_count(i % cells_per_period) / cpp;
        tops.push(profile.eval(s, y));
        interface.push(profile.envelopes(s).0);
    }
    Ok(match style {
        EpsMeshStyle::Graph => {
            let layout = Layout::Graph { nx, ny, tops, eps: Some(eps), interface: Some(interface) };
            assemble(layout, RegionTag::EpsDomain)
        }
        EpsMeshStyle::Levels => {
            let hmax = tops.iter().copied().fold(T::zero(), T::max);
            let band = (per_eps > 0).then(|| {
                let lo = interface.iter().copied().fold(T::infinity(), T::min);
                let hi = interface.iter().copied().fold(T::zero(), T::max);
                (lo, hi, eps.value::<T>() / T::from_count(per_eps))
            });
            let levels = level_heights(hmax, ny, band);
            assemble_levels(nx, ny, &levels, tops, eps, interface)
        }
        EpsMeshStyle::Fingers | EpsMeshStyle::Auto => unreachable!("resolved above"),
    })
}

/// A level below a column top is dropped when closer than this fraction of the spacing.
const LEVEL_GAP: f64 = 0.5;

/// Ratio of consecutive spacings in the graded part of a level mesh.
pub const LEVEL_GROWTH: f64 = 1.25;

/// Increasing levels from 0 to `hmax`: uniform with `ny` intervals, or with spacing
/// `fine` across `[lo, hi]` graded out to `hmax / ny`.
fn level_heights<T: Real>(hmax: T, ny: usize, band: Option<(T, T, T)>) -> Vec<T> {
    let dz = hmax / T::from_count(ny);
    let uniform = |a: T, b: T, out: &mut Vec<T>| {
        let n = ((b - a) / dz).ceil().to_usize().unwrap_or(1).max(1);
        out.extend((0..=n).map(|j| a + (b - a) * T::from_count(j) / T::from_count(n)));
    };
    let mut z = Vec::new();
    match band {
        Some((lo, hi, fine)) if fine < dz && lo > T::zero() && hi < hmax => {
            let nb = ((hi - lo) / fine).ceil().to_usize().unwrap_or(0);
            z.push(lo);
            z.extend((1..=nb).map(|j| lo + (hi - lo) * T::from_count(j) / T::from_count(nb)));
            let (mut d, mut step) = (T::zero(), fine);
            while step < dz {
                d += step;
                step *= T::lit(LEVEL_GROWTH);
                if lo - d > T::zero() {
                    z.push(lo - d);
                }
                if hi + d < hmax {
                    z.push(hi + d);
                }
            }
            if lo - d > T::zero() {
                uniform(T::zero(), lo - d, &mut z);
            } else {
                z.push(T::zero());
            }
            if hi + d < hmax {
                uniform(hi + d, hmax, &mut z);
            } else {
                z.push(hmax);
            }
            z.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));
            let tol = fine * T::lit(1e-6);
            z.dedup_by(|b, a| *b - *a < tol);
        }
        _ => uniform(T::zero(), hmax, &mut z),
    }
    z
}

fn assemble_levels<T: Real>(nx: usize, ny: usize, levels: &[T], tops: Vec<T>, eps: Eps, interface: Vec<T>) -> Mesh<T> {
    let mut vertices = Vec::new();
    let mut vertex_tags = Vec::new();
    let mut column_index = Vec::new();
    let mut col_start = Vec::with_capacity(nx + 2);
    for (i, &top) in tops.iter().enumerate() {
        col_start.push(vertices.len());
        let x1 = column_x1::<T>(i, nx);
        let lateral = i == 0 || i == nx;
        for (j, &z) in levels.iter().enumerate() {
            if j > 0 && z >= top - T::lit(LEVEL_GAP) * (z - levels[j - 1]) {
                break;
            }
            vertices.push([x1, z]);
            column_index.push(i);
            vertex_tags.push(match (j, lateral) {
                (0, _) => VertexTag::GammaB,
                (_, true) => VertexTag::Lateral,
                _ => VertexTag::Interior,
            });
        }
        vertices.push([x1, top]);
        column_index.push(i);
        vertex_tags.push(VertexTag::Top);
    }
    col_start.push(vertices.len());
    let mut triangles = Vec::new();
    let mut rungs = Vec::new();
    let mut tri_column = Vec::new();
    let mut strip_start = Vec::with_capacity(nx + 1);
    for i in 0..nx {
        strip_start.push(triangles.len());
        let (a0, a1) = (col_start[i], col_start[i + 1]);
        let (b0, b1) = (col_start[i + 1], col_start[i + 2]);
        let (m, n) = (a1 - a0 - 1, b1 - b0 - 1);
        let (mut p, mut q) = (0, 0);
        while p < m || q < n {
            let right = p == m || (q < n && vertices[b0 + q + 1][1] <= vertices[a0 + p + 1][1]);
            if right {
                triangles.push([a0 + p, b0 + q, b0 + q + 1]);
                q += 1;
            } else {
                triangles.push([a0 + p, b0 + q, a0 + p + 1]);
                p += 1;
            }
            rungs.push([a0 + p, b0 + q]);
            tri_column.push(i);
        }
    }
    strip_start.push(triangles.len());
    let region_tags = vec![RegionTag::EpsDomain; triangles.len()];
    let layout = Layout::Levels(Box::new(LevelStrips {
        nx,
        ny,
        tops,
        eps,
        interface,
        strip_start,
        rungs,
        tri_column,
    }));
    Mesh { vertices, triangles, vertex_tags, region_tags, column_index, layout }
}

/// Mesh of the fixed domain `Omega`, split into `Omega-` (below `eta_-`) and `Omega+`.
/// A profile constant in `y` has an empty `Omega+`; an `Omega-`-only mesh is returned
/// with a warning.
pub fn build_mesh_limit<T: Real>(
    profile: &EtaProfile<T>,
    nx: usize,
    ny_minus: usize,
    ny_plus: usize,
) -> Result<BuiltMesh<T>, GeometryError> {
    if nx < 4 || ny_minus < 4 || ny_plus < 4 {
        return Err(GeometryError::ResolutionTooCoarse(format!(
            "limit mesh needs nx, ny_minus, ny_plus >= 4 (got {nx}, {ny_minus}, {ny_plus})"
        )));
    }
    let mut interface = Vec::with_capacity(nx + 1);
    let mut tops = Vec::with_capacity(nx + 1);
    for i in 0..=nx {
        let (lo, hi) = profile.envelopes(column_x1::<T>(i, nx));
        interface.push(lo);
        tops.push(hi);
    }
    let thick: Vec<bool> =
        interface.iter().zip(&tops).map(|(lo, hi)| *hi - *lo >= T::tol(MIN_LAYER)).collect();
    if thick.iter().all(|t| !t) {
        let layout = Layout::Graph { nx, ny: ny_minus, tops: interface, eps: None, interface: None };
        return Ok(BuiltMesh {
            mesh: assemble(layout, RegionTag::OmegaMinus),
            warning: Some("Omega+ is empty (eta constant in y); meshing Omega- only".into()),
        });
    }
    if thick.iter().any(|t| !t) {
        return Err(GeometryError::DegeneratePlusLayer(
            "eta_+ - eta_- vanishes on part of [0, 1]; the stacked mesh would contain \
             zero-area triangles"
                .into(),
        ));
    }
    let layout = Layout::Layered { nx, ny_minus, ny_plus, interface, tops };
    Ok(BuiltMesh { mesh: assemble(layout, RegionTag::OmegaMinus), warning: None })
}

fn column_x1<T: Real>(i: usize, nx: usize) -> T {
    T::from_count(i) / T::from_count(nx)
}

fn assemble<T: Real>(layout: Layout<T>, default_region: RegionTag) -> Mesh<T> {
    let (nx, rows) = (layout.nx(), layout.rows());
    let mut vertices = Vec::with_capacity((nx + 1) * (rows + 1));
    let mut vertex_tags = Vec::with_capacity(vertices.capacity());
    let mut column_index = Vec::with_capacity(vertices.capacity());
    for j in 0..=rows {
        for i in 0..=nx {
            vertices.push([column_x1(i, nx), layout.row_height(i, T::zero(), j)]);
            column_index.push(i);
            let tag = if j == 0 {
                VertexTag::GammaB
            } else if layout.interface_row() == Some(j) {
                VertexTag::Interface
            } else if j == rows {
                VertexTag::Top
            } else if i == 0 || i == nx {
                VertexTag::Lateral
            } else {
                VertexTag::Interior
            };
            vertex_tags.push(tag);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * rows);
    let mut region_tags = Vec::with_capacity(2 * nx * rows);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..rows {
        let region = match layout.interface_row() {
            Some(r) if j >= r => RegionTag::OmegaPlus,
            _ => default_region,
        };
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            if layout.rising_row(j) {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
            region_tags.push(region);
            region_tags.push(region);
        }
    }
    Mesh { vertices, triangles, vertex_tags, region_tags, column_index, layout }
}

impl<T: Real> Layout<T> {
    pub fn nx(&self) -> usize {
        match self {
            Layout::Graph { nx, .. } | Layout::Layered { nx, .. } => *nx,
            Layout::Levels(l) => l.nx,
            Layout::Fingers(f) => f.nx(),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Layout::Graph { ny, .. } => *ny,
            Layout::Layered { ny_minus, ny_plus, .. } => ny_minus + ny_plus,
            Layout::Levels(l) => l.ny,
            Layout::Fingers(f) => f.rows(),
        }
    }

    /// Whether lattice row `j` is split along the rising diagonal. Layered meshes alternate
    /// by row so that a lateral column sees upper and lower cell halves in turn; with the
    /// purely vertical operator of `Omega+` a fixed direction would weight the two lateral
    /// columns differently.
    fn rising_row(&self, j: usize) -> bool {
        !matches!(self, Layout::Layered { .. }) || j % 2 == 0
    }

    fn interface_row(&self) -> Option<usize> {
        match self {
            Layout::Graph { .. } | Layout::Levels(_) | Layout::Fingers(_) => None,
            Layout::Layered { ny_minus, .. } => Some(*ny_minus),
        }
    }

    fn lerp(v: &[T], i: usize, lam: T) -> T {
        if lam == T::zero() {
            v[i]
        } else {
            v[i] * (T::one() - lam) + v[i + 1] * lam
        }
    }

    /// Height of lattice row `j` at `x1 = (i + lam) / nx`.
    fn row_height(&self, i: usize, lam: T, j: usize) -> T {
        match self {
            Layout::Graph { ny, tops, .. } => {
                let top = Self::lerp(tops, i, lam);
                if j == *ny {
                    top
                } else {
                    T::from_count(j) / T::from_count(*ny) * top
                }
            }
            Layout::Layered { ny_minus, ny_plus, interface, tops, .. } => {
                let mid = Self::lerp(interface, i, lam);
                if j <= *ny_minus {
                    if j == *ny_minus {
                        mid
                    } else {
                        T::from_count(j) / T::from_count(*ny_minus) * mid
                    }
                } else {
                    let top = Self::lerp(tops, i, lam);
                    let jj = j - ny_minus;
                    if jj == *ny_plus {
                        top
                    } else {
                        mid + T::from_count(jj) / T::from_count(*ny_plus) * (top - mid)
                    }
                }
            }
            Layout::Levels(_) | Layout::Fingers(_) => unreachable!("no row map"),
        }
    }

    /// Fractional row coordinate of height `x2` at `x1 = (i + lam) / nx`.
    fn row_coordinate(&self, i: usize, lam: T, x2: T) -> T {
        match self {
            Layout::Graph { ny, tops, .. } => x2 / Self::lerp(tops, i, lam) * T::from_count(*ny),
            Layout::Layered { ny_minus, ny_plus, interface, tops, .. } => {
                let mid = Self::lerp(interface, i, lam);
                if x2 <= mid {
                    x2 / mid * T::from_count(*ny_minus)
                } else {
                    let top = Self::lerp(tops, i, lam);
                    T::from_count(*ny_minus) + (x2 - mid) / (top - mid) * T::from_count(*ny_plus)
                }
            }
            Layout::Levels(_) | Layout::Fingers(_) => unreachable!("no row map"),
        }
    }
}

impl<T: Real> Mesh<T> {
    pub fn layout(&self) -> &Layout<T> {
        &self.layout
    }

    pub fn nx(&self) -> usize {
        self.layout.nx()
    }

    pub fn rows(&self) -> usize {
        self.layout.rows()
    }

    /// Period of the oscillating domain this mesh discretizes, if any.
    pub fn eps(&self) -> Option<Eps> {
        match &self.layout {
            Layout::Graph { eps, .. } => *eps,
            Layout::Layered { .. } => None,
            Layout::Levels(l) => Some(l.eps),
            Layout::Fingers(f) => Some(f.eps),
        }
    }

    /// `eta_-` at each vertex column, when known.
    pub fn interface_heights(&self) -> Option<&[T]> {
        match &self.layout {
            Layout::Graph { interface, .. } => interface.as_deref(),
            Layout::Layered { interface, .. } => Some(interface),
            Layout::Levels(l) => Some(&l.interface),
            Layout::Fingers(f) => Some(&f.interface),
        }
    }

    /// Height of the upper boundary at each vertex column.
    pub fn top_heights(&self) -> &[T] {
        match &self.layout {
            Layout::Graph { tops, .. } | Layout::Layered { tops, .. } => tops,
            Layout::Levels(l) => &l.tops,
            Layout::Fingers(f) => &f.tops,
        }
    }

    pub fn has_limit_regions(&self) -> bool {
        matches!(self.layout, Layout::Layered { .. })
            || self.region_tags.iter().all(|r| *r == RegionTag::OmegaMinus)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Vertex column `i` such that triangle `t` lies between columns `i` and `i + 1`
    /// (for finger triangles, the lattice column holding its centroid).
    pub fn triangle_column(&self, t: usize) -> usize {
        match &self.layout {
            Layout::Levels(l) => l.tri_column[t],
            Layout::Fingers(_) => {
                let [a, b, c] = self.triangle_points(t);
                let x = (a[0] + b[0] + c[0]) / T::from_count(3) * T::from_count(self.nx());
                x.floor().to_usize().unwrap_or(0).min(self.nx() - 1)
            }
            _ => (t / 2) % self.nx(),
        }
    }

    pub fn triangle_points(&self, t: usize) -> [Point<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> T {
        let [p, q, r] = self.triangle_points(t);
        ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])) / T::lit(2.0)
    }

    pub fn total_area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Undirected edges with the number of incident triangles.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::with_capacity(3 * self.triangles.len());
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Checks conformity, orientation, Dirichlet tagging and column structure.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let edges = self.edge_counts();
        if let Some((e, n)) = edges.iter().find(|(_, n)| **n > 2) {
            return Err(GeometryError::InvalidMesh(format!("edge {e:?} shared by {n} triangles")));
        }
        for t in 0..self.triangles.len() {
            if !(self.signed_area(t) > T::zero()) {
                return Err(GeometryError::InvalidMesh(format!("triangle {t} has non-positive area")));
            }
        }
        let mut column_x1 = std::collections::HashMap::new();
        for (v, p) in self.vertices.iter().enumerate() {
            if p[1] == T::zero() && self.vertex_tags[v] != VertexTag::GammaB {
                return Err(GeometryError::InvalidMesh(format!("vertex {v} on x2 = 0 not gamma_b")));
            }
            if *column_x1.entry(self.column_index[v]).or_insert(p[0]) != p[0] {
                return Err(GeometryError::InvalidMesh(format!(
                    "vertex {v} does not share x1 with its column"
                )));
            }
        }
        let euler = self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64;
        if euler != 1 {
            return Err(GeometryError::InvalidMesh(format!("Euler characteristic {euler} != 1")));
        }
        Ok(())
    }

    /// Locates `p` by inverting the structured map, with tolerance `1e-12` on the boundary.
    pub fn locate(&self, p: Point<T>) -> Option<Location<T>> {
        let tol = T::tol(LOCATE_TOL);
        let [x1, x2] = p;
        if !(x1 >= -tol && x1 <= T::one() + tol) || !x2.is_finite() {
            return None;
        }
        let (i, lam) = self.column_of(x1);
        let top = self.top_at(x1);
        if x2 < -tol || x2 > top + tol * top.max(T::one()) {
            return None;
        }
        let candidates: Vec<usize> = match &self.layout {
            Layout::Levels(l) => {
                let (s0, s1) = (l.strip_start[i], l.strip_start[i + 1]);
                let k = l.rungs[s0..s1].partition_point(|r| l.rung_height(&self.vertices, r, lam) < x2);
                let t = s0 + k.min(s1 - s0 - 1);
                vec![t, t.saturating_sub(1).max(s0), (t + 1).min(s1 - 1)]
            }
            Layout::Fingers(f) => f.candidates(x1, x2, i, tol),
            _ => {
                let (nx, rows) = (self.nx(), self.rows());
                let r = self.layout.row_coordinate(i, lam, x2.max(T::zero()).min(top));
                let j0 = r.floor().to_usize().unwrap_or(0).min(rows - 1);
                [j0, j0.saturating_sub(1), (j0 + 1).min(rows - 1)]
                    .iter()
                    .flat_map(|j| [2 * (j * nx + i), 2 * (j * nx + i) + 1])
                    .collect()
            }
        };
        let mut best: Option<Location<T>> = None;
        let mut best_min = T::neg_infinity();
        for t in candidates {
            let bary = self.barycentric(t, p);
            let m = bary[0].min(bary[1]).min(bary[2]);
            if m > best_min {
                best_min = m;
                best = Some(Location { triangle: t, bary });
            }
            if best_min >= T::zero() {
                break;
            }
        }
        let loc = best?;
        if best_min < -T::tol(1e-9) {
            return None;
        }
        Some(loc)
    }

    fn column_of(&self, x1: T) -> (usize, T) {
        let nx = self.nx();
        let sx = x1.max(T::zero()).min(T::one()) * T::from_count(nx);
        let i = sx.floor().to_usize().unwrap_or(0).min(nx - 1);
        (i, sx - T::from_count(i))
    }

    /// Height of the meshed top boundary at `x1`.
    pub fn top_at(&self, x1: T) -> T {
        let (i, lam) = self.column_of(x1);
        match &self.layout {
            Layout::Levels(l) => Layout::lerp(&l.tops, i, lam),
            Layout::Fingers(f) => f.top_at(x1),
            _ => self.layout.row_height(i, lam, self.rows()),
        }
    }

    /// Piecewise-linear `eta_-` stored with the mesh, if any.
    pub fn interface_at(&self, x1: T) -> Option<T> {
        let v = self.interface_heights()?;
        let (i, lam) = self.column_of(x1);
        Some(Layout::lerp(v, i, lam))
    }

    /// Sorted heights where the vertical line at `x1` crosses mesh edges, from `0` to the top.
    /// A P1 field is linear between consecutive entries.
    pub fn vertical_breaks(&self, x1: T) -> Vec<T> {
        let (i, lam) = self.column_of(x1);
        if let Layout::Levels(l) = &self.layout {
            let rungs = &l.rungs[l.strip_start[i]..l.strip_start[i + 1]];
            let mut out = vec![T::zero()];
            out.extend(rungs.iter().map(|r| l.rung_height(&self.vertices, r, lam)));
            return out;
        }
        if let Layout::Fingers(f) = &self.layout {
            return f.breaks(x1, i, lam);
        }
        let rows = self.rows();
        let mut out = Vec::with_capacity(2 * rows + 1);
        for j in 0..=rows {
            out.push(self.layout.row_height(i, lam, j));
            if j < rows && lam > T::zero() {
                let (a, b) = if self.layout.rising_row(j) {
                    (self.layout.row_height(i, T::zero(), j), self.layout.row_height(i + 1, T::zero(), j + 1))
                } else {
                    (self.layout.row_height(i, T::zero(), j + 1), self.layout.row_height(i + 1, T::zero(), j))
                };
                out.push(a * (T::one() - lam) + b * lam);
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite heights"));
        out
    }

    pub fn barycentric(&self, t: usize, p: Point<T>) -> [T; 3] {
        let [a, b, c] = self.triangle_points(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [T::one() - l1 - l2, l1, l2]
    }

    /// Plain-text listing: a `vertices N` header then `index x1 x2 tag column` records,
    /// a `triangles M` header then `index a b c region` records.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for (v, p) in self.vertices.iter().enumerate() {
            writeln!(
                w,
                "{v} {:.17e} {:.17e} {} {}",
                p[0],
                p[1],
                self.vertex_tags[v].as_str(),
                self.column_index[v]
            )?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(w, "{t} {} {} {} {}", tri[0], tri[1], tri[2], self.region_tags[t].as_str())?;
        }
        Ok(())
    }
}
