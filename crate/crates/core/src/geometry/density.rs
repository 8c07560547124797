use super::{EtaProfile, Extrema, GeometryError};
use crate::scalar::Real;

/// The density `h(x) = |Y(x)|` of the oscillating domain inside its envelope.
#[derive(Clone, Debug)]
pub struct DensityField<T> {
    profile: EtaProfile<T>,
    /// Heights between which `h` is interpolated linearly in `x2`; empty for the exact density.
    levels: Vec<T>,
}

impl<T: Real> DensityField<T> {
    pub fn new(profile: EtaProfile<T>) -> Self {
        DensityField { profile, levels: Vec::new() }
    }

    /// Density exact at the increasing heights `levels` and linear in `x2` between them,
    /// as seen by a mesh whose elements are bounded by those levels.
    pub fn interpolated(profile: EtaProfile<T>, levels: Vec<T>) -> Self {
        DensityField { profile, levels }
    }

    pub fn profile(&self) -> &EtaProfile<T> {
        &self.profile
    }

    pub fn h(&self, x: [T; 2]) -> Result<T, GeometryError> {
        self.h_with(x, &self.profile.extrema(x[0]))
    }

    fn h_with(&self, x: [T; 2], e: &Extrema<T>) -> Result<T, GeometryError> {
        let [x1, x2] = x;
        let n = self.levels.len();
        if n < 2 || x2 <= self.levels[0] || x2 >= self.levels[n - 1] {
            return self.profile.fiber_measure_with(x, e);
        }
        let j = (self.levels.partition_point(|z| *z <= x2) - 1).min(n - 2);
        let (a, b) = (self.levels[j], self.levels[j + 1]);
        let s = (x2 - a) / (b - a);
        let ha = self.profile.fiber_measure_with([x1, a], e)?;
        let hb = self.profile.fiber_measure_with([x1, b], e)?;
        Ok(ha * (T::one() - s) + hb * s)
    }

    /// Values at many points sharing one abscissa (envelopes computed once).
    pub fn h_column(&self, x1: T, x2s: &[T]) -> Result<Vec<T>, GeometryError> {
        let e = self.profile.extrema(x1);
        x2s.iter().map(|&x2| self.h_with([x1, x2], &e)).collect()
    }

    /// Lattice samples `(x1, x2, h)` with `x1 = i/nx` and `x2 = (j/ny) * eta_+(x1)`.
    pub fn lattice(&self, nx: usize, ny: usize) -> Result<Vec<[T; 3]>, GeometryError> {
        let mut out = Vec::with_capacity((nx + 1) * (ny + 1));
        for i in 0..=nx {
            let x1 = T::from_count(i) / T::from_count(nx.max(1));
            let e = self.profile.extrema(x1);
            for j in 0..=ny {
                let x2 = if j == ny {
                    e.eta_plus
                } else {
                    T::from_count(j) / T::from_count(ny.max(1)) * e.eta_plus
                };
                out.push([x1, x2, self.h_with([x1, x2], &e)?]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProfileFamily;

    // Simpson rule on [a, b] with n (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn fubini_identity() {
        for params in [vec![1.0, 1.0], vec![0.5, 0.8, 0.1]] {
            let p = EtaProfile::new(ProfileFamily::SineBump, params, 256, None).unwrap();
            let d = DensityField::new(p.clone());
            let (_, top) = p.envelopes(0.4);
            // h behaves like sqrt near the top; split the interval to keep Simpson accurate
            let h = |x2: f64| d.h([0.4, x2]).unwrap();
            let (lo, _) = p.envelopes(0.4);
            let lower = lo;
            let upper = simpson(h, lo, top - 1e-6, 20_000) + 1e-6 * h(top - 5e-7);
            let lhs = lower + upper;
            let rhs = simpson(|y| p.eval(0.4, y), 0.0, 1.0, 2000);
            assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn lattice_rows() {
        let d = DensityField::new(EtaProfile::<f64>::sine_bump(1.0, 1.0).unwrap());
        let rows = d.lattice(4, 8).unwrap();
        let row = rows
            .iter()
            .find(|r| (r[0] - 0.5).abs() < 1e-15 && (r[1] - 1.5).abs() < 1e-12)
            .unwrap();
        assert!((row[2] - 0.5).abs() < 1e-9);
        assert!(rows.iter().filter(|r| r[1] > 1.999).all(|r| r[2] == 0.0));
        let c = DensityField::new(EtaProfile::constant(1.0f64).unwrap());
        assert!(c.lattice(3, 3).unwrap().iter().all(|r| r[2] == 1.0));
    }

    #[test]
    fn interpolated_density_is_exact_at_levels() {
        let p = EtaProfile::<f64>::sine_bump(1.0, 1.0).unwrap();
        let exact = DensityField::new(p.clone());
        let d = DensityField::interpolated(p, vec![1.0, 1.25, 1.5, 2.0]);
        for z in [0.5, 1.0, 1.25, 1.5, 2.0] {
            assert!((d.h([0.3, z]).unwrap() - exact.h([0.3, z]).unwrap()).abs() < 1e-14);
        }
        let mid = 0.5 * (exact.h([0.3, 1.5]).unwrap() + exact.h([0.3, 2.0]).unwrap());
        assert!((d.h([0.3, 1.75]).unwrap() - mid).abs() < 1e-14);
        assert!(d.h([0.3, 2.5]).is_err());
    }
}
