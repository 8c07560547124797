//! Smooth test functions for the weak-convergence metrics.

use crate::fem::{integrate_field, Integrand, Region};
use crate::geometry::Mesh;
use crate::scalar::{Point, Real};

/// Tensor products of `{1, x1, sin(pi x1), cos(2 pi x1)}` and `{1, x2, sin(pi x2 / 2)}`,
/// lowest order first.
const ORDER: [(usize, usize); 12] =
    [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (3, 0), (2, 1), (1, 2), (2, 2), (3, 1), (3, 2)];

pub const MAX_BANK: usize = ORDER.len();

const X_NAMES: [&str; 4] = ["1", "x1", "sin(pi x1)", "cos(2 pi x1)"];
const Y_NAMES: [&str; 3] = ["1", "x2", "sin(pi x2/2)"];

#[derive(Clone, Debug)]
pub struct TestFunction<T> {
    ix: usize,
    iy: usize,
    /// `L2` norm over the meshed domain used to build the bank.
    pub norm: T,
}

impl<T: Real> TestFunction<T> {
    pub fn eval(&self, p: Point<T>) -> T {
        let fx = match self.ix {
            0 => T::one(),
            1 => p[0],
            2 => (T::PI() * p[0]).sin(),
            _ => (T::TAU() * p[0]).cos(),
        };
        let fy = match self.iy {
            0 => T::one(),
            1 => p[1],
            _ => (T::FRAC_PI_2() * p[1]).sin(),
        };
        fx * fy
    }

    pub fn name(&self) -> String {
        match (self.ix, self.iy) {
            (0, 0) => "1".into(),
            (0, j) => Y_NAMES[j].into(),
            (i, 0) => X_NAMES[i].into(),
            (i, j) => format!("{}*{}", X_NAMES[i], Y_NAMES[j]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TestFunctionBank<T> {
    pub members: Vec<TestFunction<T>>,
}

impl<T: Real> TestFunctionBank<T> {
    /// First `size` members (at most [`MAX_BANK`]), normalized over `domain`.
    pub fn new(size: usize, domain: &Mesh<T>) -> Self {
        let members = ORDER
            .iter()
            .take(size.min(MAX_BANK))
            .map(|&(ix, iy)| {
                let f = TestFunction { ix, iy, norm: T::one() };
                let sq = integrate_field(domain, Integrand::One, |p| f.eval(p) * f.eval(p), Region::Whole)
                    .expect("whole-domain integral");
                TestFunction { norm: sq.sqrt(), ..f }
            })
            .collect();
        TestFunctionBank { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh_limit, EtaProfile};

    #[test]
    fn bank_members_and_norms() {
        let p = EtaProfile::constant(1.0).unwrap();
        let m = build_mesh_limit(&p, 16, 16, 4).unwrap().mesh;
        let b = TestFunctionBank::new(12, &m);
        assert_eq!(b.len(), 12);
        assert_eq!(b.members[0].name(), "1");
        assert_eq!(b.members[3].name(), "x1*x2");
        assert!((b.members[0].norm - 1.0f64).abs() < 1e-12);
        // |x1 x2| on the unit square is 1/3
        assert!((b.members[3].norm - 1.0 / 3.0).abs() < 1e-12);
        // |sin(pi x2/2)|^2 = 1/2
        assert!((b.members[5].norm - 0.5f64.sqrt()).abs() < 1e-6);
        for f in &b.members {
            for p in [[0.0, 0.0], [0.3, 0.7], [1.0, 1.0]] {
                assert!(f.eval(p).abs() <= 1.0);
            }
        }
        assert_eq!(TestFunctionBank::new(3, &m).len(), 3);
    }
}
