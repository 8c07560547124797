//! Triangle quadrature rules, P1 shape gradients and half-plane clipping.

use crate::scalar::{Point, Real};

/// Rule on the reference triangle in barycentric form; weights sum to one.
#[derive(Clone, Copy, Debug)]
pub struct TriRule {
    pub bary: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

/// Mid-edge rule, exact for quadratics.
pub const MID_EDGE: TriRule = TriRule {
    bary: &[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

/// Seven-point rule, exact for quintics.
pub const SEVEN_POINT: TriRule = TriRule {
    bary: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [0.059_715_871_789_770, 0.470_142_064_105_115, 0.470_142_064_105_115],
        [0.470_142_064_105_115, 0.059_715_871_789_770, 0.470_142_064_105_115],
        [0.470_142_064_105_115, 0.470_142_064_105_115, 0.059_715_871_789_770],
        [0.797_426_985_353_087, 0.101_286_507_323_456, 0.101_286_507_323_456],
        [0.101_286_507_323_456, 0.797_426_985_353_087, 0.101_286_507_323_456],
        [0.101_286_507_323_456, 0.101_286_507_323_456, 0.797_426_985_353_087],
    ],
    weights: &[
        0.225,
        0.132_394_152_788_506,
        0.132_394_152_788_506,
        0.132_394_152_788_506,
        0.125_939_180_544_827,
        0.125_939_180_544_827,
        0.125_939_180_544_827,
    ],
};

impl TriRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical points of the rule on a triangle.
    pub fn points<T: Real>(&self, tri: &[Point<T>; 3]) -> impl Iterator<Item = (Point<T>, [T; 3], T)> + '_ {
        let tri = *tri;
        self.bary.iter().zip(self.weights).map(move |(b, w)| {
            let l = [T::lit(b[0]), T::lit(b[1]), T::lit(b[2])];
            (map_bary(&tri, l), l, T::lit(*w))
        })
    }
}

pub fn map_bary<T: Real>(tri: &[Point<T>; 3], l: [T; 3]) -> Point<T> {
    [
        l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
        l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
    ]
}

/// Gradients of the three P1 basis functions and the (signed) area.
pub fn p1_gradients<T: Real>(tri: &[Point<T>; 3]) -> ([[T; 2]; 3], T) {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (g, det / T::lit(2.0))
}

pub fn signed_area<T: Real>(tri: &[Point<T>; 3]) -> T {
    let [a, b, c] = *tri;
    ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) / T::lit(2.0)
}

/// Which side of the graph `x2 = c0 + c1 x1` to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

/// Part of the triangle on one side of a line, fan-triangulated.
pub fn clip_triangle<T: Real>(tri: &[Point<T>; 3], c0: T, c1: T, side: Side) -> Vec<[Point<T>; 3]> {
    let sign = if side == Side::Above { T::one() } else { -T::one() };
    let g = |p: &Point<T>| sign * (p[1] - (c0 + c1 * p[0]));
    let vals = [g(&tri[0]), g(&tri[1]), g(&tri[2])];
    if vals.iter().all(|v| *v >= T::zero()) {
        return vec![*tri];
    }
    if vals.iter().all(|v| *v <= T::zero()) {
        return Vec::new();
    }
    let mut poly: Vec<Point<T>> = Vec::with_capacity(4);
    for k in 0..3 {
        let (p, q) = (tri[k], tri[(k + 1) % 3]);
        let (gp, gq) = (vals[k], vals[(k + 1) % 3]);
        if gp >= T::zero() {
            poly.push(p);
        }
        if (gp > T::zero() && gq < T::zero()) || (gp < T::zero() && gq > T::zero()) {
            let t = gp / (gp - gq);
            poly.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    (1..poly.len().saturating_sub(1))
        .map(|k| [poly[0], poly[k], poly[k + 1]])
        .filter(|t| signed_area(t) > T::zero())
        .collect()
}
