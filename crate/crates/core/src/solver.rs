//! Damped Newton iteration with Armijo backtracking and a Picard fallback,
//! shared by the oscillating-domain and limit problems.

use rayon::prelude::*;

use crate::geometry::{Mesh, VertexTag};
use crate::scalar::Real;
use crate::sparse::{norm2, norm_inf, pcg, CsrMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions<T> {
    /// Stop when `|R|_inf <= rtol (1 + |f|_L2)`.
    pub rtol: T,
    pub max_iters: usize,
    pub cg_rtol: T,
    /// CG iteration cap as a multiple of the number of unknowns.
    pub cg_max_factor: usize,
    pub armijo: T,
    pub min_step: T,
    /// Consecutive slow Newton steps before switching to Picard.
    pub stagnation_limit: usize,
    /// Starting iterate (vertex values); Dirichlet entries are reset to zero.
    pub initial: Option<Vec<T>>,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            rtol: T::lit(1e-10).max(T::epsilon() * T::lit(100.0)),
            max_iters: 100,
            cg_rtol: T::lit(1e-12).max(T::epsilon() * T::lit(10.0)),
            cg_max_factor: 10,
            armijo: T::lit(1e-4),
            min_step: T::lit(2f64.powi(-20)),
            stagnation_limit: 5,
            initial: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    Newton,
    Picard,
}

impl StepMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StepMode::Newton => "newton",
            StepMode::Picard => "picard",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    /// `|R|_inf` before the step.
    pub residual: T,
    pub step: T,
    pub mode: StepMode,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats<T> {
    /// Number of accepted nonlinear steps.
    pub iterations: usize,
    pub residual: T,
    pub tolerance: T,
    pub history: Vec<IterationRecord<T>>,
}

/// Vertex to unknown numbering with Dirichlet vertices (`gamma_b`) eliminated.
#[derive(Clone, Debug)]
pub struct DofMap {
    vertex_to_dof: Vec<Option<usize>>,
    dof_to_vertex: Vec<usize>,
}

impl DofMap {
    pub fn new<T: Real>(mesh: &Mesh<T>) -> Self {
        let mut vertex_to_dof = Vec::with_capacity(mesh.vertex_count());
        let mut dof_to_vertex = Vec::new();
        for (v, tag) in mesh.vertex_tags.iter().enumerate() {
            if *tag == VertexTag::GammaB {
                vertex_to_dof.push(None);
            } else {
                vertex_to_dof.push(Some(dof_to_vertex.len()));
                dof_to_vertex.push(v);
            }
        }
        DofMap { vertex_to_dof, dof_to_vertex }
    }

    pub fn len(&self) -> usize {
        self.dof_to_vertex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_vertex.is_empty()
    }

    pub fn dof(&self, v: usize) -> Option<usize> {
        self.vertex_to_dof[v]
    }

    pub fn vertex(&self, d: usize) -> usize {
        self.dof_to_vertex[d]
    }

    pub fn pattern<T: Real>(&self, mesh: &Mesh<T>) -> CsrMatrix<T> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.len()];
        for tri in &mesh.triangles {
            for &a in tri {
                if let Some(da) = self.dof(a) {
                    for &b in tri {
                        if let Some(db) = self.dof(b) {
                            rows[da].push(db);
                        }
                    }
                }
            }
        }
        CsrMatrix::from_pattern(rows)
    }
}

/// Local residual and (optionally) local matrix of one triangle.
pub(crate) type ElementBlock<T> = ([T; 3], [[T; 3]; 3]);

/// A P1 discretization assembled triangle by triangle.
pub(crate) trait ElementKernel<T: Real>: Sync {
    type Error: Send;

    fn mesh(&self) -> &Mesh<T>;

    /// Local contribution of triangle `t` for nodal values `u`.
    fn element(
        &self,
        t: usize,
        u: &[T],
        matrix: Option<StepMode>,
    ) -> Result<ElementBlock<T>, Self::Error>;
}

/// Residual over all vertices with Dirichlet rows zeroed.
pub(crate) fn assemble_residual<T: Real, K: ElementKernel<T>>(kernel: &K, u: &[T]) -> Result<Vec<T>, K::Error> {
    let mesh = kernel.mesh();
    let blocks: Vec<[T; 3]> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| kernel.element(t, u, None).map(|b| b.0))
        .collect::<Result<_, _>>()?;
    let mut r = vec![T::zero(); mesh.vertex_count()];
    for (tri, b) in mesh.triangles.iter().zip(&blocks) {
        for k in 0..3 {
            r[tri[k]] += b[k];
        }
    }
    for (v, tag) in mesh.vertex_tags.iter().enumerate() {
        if *tag == VertexTag::GammaB {
            r[v] = T::zero();
        }
    }
    Ok(r)
}

/// Linearized matrix on the free unknowns (row/column elimination of Dirichlet vertices).
pub(crate) fn assemble_matrix<T: Real, K: ElementKernel<T>>(
    kernel: &K,
    dofs: &DofMap,
    u: &[T],
    mode: StepMode,
    mat: &mut CsrMatrix<T>,
) -> Result<(), K::Error> {
    let mesh = kernel.mesh();
    let blocks: Vec<[[T; 3]; 3]> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| kernel.element(t, u, Some(mode)).map(|b| b.1))
        .collect::<Result<_, _>>()?;
    mat.clear();
    for (tri, b) in mesh.triangles.iter().zip(&blocks) {
        for a in 0..3 {
            let Some(da) = dofs.dof(tri[a]) else { continue };
            for c in 0..3 {
                if let Some(dc) = dofs.dof(tri[c]) {
                    mat.add(da, dc, b[a][c]);
                }
            }
        }
    }
    Ok(())
}

/// Outcome of a nonlinear solve that did not reach the tolerance.
pub(crate) struct Unconverged<T> {
    pub stats: SolveStats<T>,
}

pub(crate) enum SolveFailure<T, E> {
    Kernel(E),
    NotConverged(Unconverged<T>),
}

pub(crate) fn damped_newton<T: Real, K: ElementKernel<T>>(
    kernel: &K,
    opts: &SolverOptions<T>,
    source_norm: T,
) -> Result<(Vec<T>, SolveStats<T>), SolveFailure<T, K::Error>> {
    let mesh = kernel.mesh();
    let dofs = DofMap::new(mesh);
    let mut mat = dofs.pattern::<T>(mesh);
    let mut u = match &opts.initial {
        Some(init) if init.len() == mesh.vertex_count() => init.clone(),
        _ => vec![T::zero(); mesh.vertex_count()],
    };
    for v in 0..mesh.vertex_count() {
        if dofs.dof(v).is_none() {
            u[v] = T::zero();
        }
    }
    let tol = opts.rtol * (T::one() + source_norm);
    let mut mode = StepMode::Newton;
    let mut stagnant = 0;
    let mut history = Vec::new();
    let mut accepted = 0;
    let mut r = assemble_residual(kernel, &u).map_err(SolveFailure::Kernel)?;
    let cg_max = opts.cg_max_factor * dofs.len().max(1);
    for it in 0..opts.max_iters {
        let rn = norm_inf(&r);
        if rn <= tol || dofs.is_empty() {
            return Ok((u, SolveStats { iterations: accepted, residual: rn, tolerance: tol, history }));
        }
        assemble_matrix(kernel, &dofs, &u, mode, &mut mat).map_err(SolveFailure::Kernel)?;
        let rhs: Vec<T> = (0..dofs.len()).map(|d| -r[dofs.vertex(d)]).collect();
        let mut delta = vec![T::zero(); dofs.len()];
        let cg = pcg(&mat, &rhs, &mut delta, opts.cg_rtol, cg_max);

        // Armijo backtracking on the Euclidean residual norm
        let merit0 = norm2(&r);
        let mut t = T::one();
        let mut trial = u.clone();
        let accepted_step = loop {
            for d in 0..dofs.len() {
                let v = dofs.vertex(d);
                trial[v] = u[v] + t * delta[d];
            }
            let rt = assemble_residual(kernel, &trial).map_err(SolveFailure::Kernel)?;
            if norm2(&rt) <= (T::one() - opts.armijo * t) * merit0 {
                break Some(rt);
            }
            t = t / T::lit(2.0);
            if t < opts.min_step {
                break None;
            }
        };
        history.push(IterationRecord {
            iteration: it,
            residual: rn,
            step: if accepted_step.is_some() { t } else { T::zero() },
            mode,
            cg_iterations: cg.iterations,
        });
        match accepted_step {
            Some(rt) => {
                if mode == StepMode::Newton {
                    if norm_inf(&rt) > T::lit(0.9) * rn {
                        stagnant += 1;
                    } else {
                        stagnant = 0;
                    }
                    if stagnant >= opts.stagnation_limit {
                        mode = StepMode::Picard;
                    }
                }
                std::mem::swap(&mut u, &mut trial);
                r = rt;
                accepted += 1;
            }
            None if mode == StepMode::Newton => mode = StepMode::Picard,
            None => break,
        }
    }
    let rn = norm_inf(&r);
    if rn <= tol {
        return Ok((u, SolveStats { iterations: accepted, residual: rn, tolerance: tol, history }));
    }
    Err(SolveFailure::NotConverged(Unconverged {
        stats: SolveStats { iterations: accepted, residual: rn, tolerance: tol, history },
    }))
}
