use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::fem::{field_norms, solve_nonlinear, Field};
use crate::geometry::{build_mesh_eps_graded, EpsMeshStyle, FingerLevels, build_mesh_limit, DensityField, Eps, EtaProfile};
use crate::limit::{solve_limit, LimitSolution};
use crate::numeric::loglog_slope;
use crate::operator::{check_hypotheses, DomainBox, HypothesisReport};
use crate::scalar::Real;
use crate::solver::{DofMap, IterationRecord, SolveStats};
use crate::unfolding::{check_integral_lemma, UnfoldGrid};

use super::bank::TestFunctionBank;
use super::config::RunConfig;
use super::metrics::{weak_error_flux, weak_error_u, LimitData};
use super::HarnessError;

pub const CSV_HEADER: &str = "eps,dofs,newton_iters,residual,grad_norm,weak_err_u,weak_err_flux1,\
weak_err_flux2_plus,weak_err_grad_minus,lemma32_gap";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub dofs: usize,
    pub newton_iters: usize,
    pub residual: f64,
    pub grad_norm: f64,
    pub weak_err_u: f64,
    pub weak_err_flux1: f64,
    pub weak_err_flux2_plus: f64,
    /// Weak error of the gradient on `Omega-`.
    pub weak_err_grad_minus: f64,
    pub lemma32_gap: f64,
}

/// A-priori norms of one `eps`-solution, on `Omega_eps` and unfolded on `Omega_u+`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsRow {
    pub eps: f64,
    pub u_l2: f64,
    pub grad_l2: f64,
    pub flux_l2: f64,
    pub unfolded_u: f64,
    pub unfolded_grad: f64,
    pub unfolded_flux: f64,
}

impl BoundsRow {
    fn values(&self) -> [f64; 6] {
        [self.u_l2, self.grad_l2, self.flux_l2, self.unfolded_u, self.unfolded_grad, self.unfolded_flux]
    }
}

const BOUND_NAMES: [&str; 6] = ["u_l2", "grad_l2", "flux_l2", "unfolded_u", "unfolded_grad", "unfolded_flux"];

#[derive(Clone, Debug, PartialEq)]
pub struct LimitDiagnostics {
    pub dofs: usize,
    pub iterations: usize,
    pub residual: f64,
    pub constraint_residual: f64,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub bounds: Vec<BoundsRow>,
    pub limit: LimitDiagnostics,
    pub hypothesis: HypothesisReport<f64>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub pass: bool,
    /// `(eps, record)` for every nonlinear iteration, in sweep order.
    pub solver_log: Vec<(f64, IterationRecord<f64>)>,
}

impl SweepReport {
    pub fn csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.eps,
                r.dofs,
                r.newton_iters,
                r.residual,
                r.grad_norm,
                r.weak_err_u,
                r.weak_err_flux1,
                r.weak_err_flux2_plus,
                r.weak_err_grad_minus,
                r.lemma32_gap
            );
        }
        s
    }

    pub fn bounds_csv(&self) -> String {
        let mut s = format!("eps,{}\n", BOUND_NAMES.join(","));
        for b in &self.bounds {
            let v = b.values().map(|x| x.to_string());
            let _ = writeln!(s, "{},{}", b.eps, v.join(","));
        }
        s
    }

    /// One `# name` block per metric of `(log10 eps, log10 value)` pairs; zero values are skipped.
    pub fn plot_data(&self) -> String {
        let metrics: [(&str, fn(&SweepRow) -> f64); 6] = [
            ("grad_norm", |r| r.grad_norm),
            ("weak_err_u", |r| r.weak_err_u),
            ("weak_err_flux1", |r| r.weak_err_flux1),
            ("weak_err_flux2_plus", |r| r.weak_err_flux2_plus),
            ("weak_err_grad_minus", |r| r.weak_err_grad_minus),
            ("lemma32_gap", |r| r.lemma32_gap),
        ];
        let blocks: Vec<String> = metrics
            .iter()
            .map(|(name, get)| {
                let mut b = format!("# {name}\n");
                for r in &self.rows {
                    let v = get(r);
                    if v > 0.0 {
                        let _ = writeln!(b, "{} {}", r.eps.log10(), v.log10());
                    }
                }
                b
            })
            .collect();
        blocks.join("\n")
    }

    pub fn solver_log_csv(&self) -> String {
        let mut s = String::from("eps,iteration,residual,step,mode,cg_iterations\n");
        for (eps, r) in &self.solver_log {
            let _ = writeln!(s, "{},{},{},{},{},{}", eps, r.iteration, r.residual, r.step, r.mode.as_str(), r.cg_iterations);
        }
        s
    }

    pub fn checks_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "WARN {w}");
        }
        s
    }

    /// Writes `sweep.csv`, `bounds.csv`, `plot_data.txt`, `solver_log.csv` and `checks.txt`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), self.csv())?;
        std::fs::write(dir.join("bounds.csv"), self.bounds_csv())?;
        std::fs::write(dir.join("plot_data.txt"), self.plot_data())?;
        std::fs::write(dir.join("solver_log.csv"), self.solver_log_csv())?;
        std::fs::write(dir.join("checks.txt"), self.checks_text())
    }
}

/// `[0, 1] x [0, max eta_+]`, the box containing every domain built from `profile`.
pub fn hypothesis_box<T: Real>(profile: &EtaProfile<T>) -> DomainBox<T> {
    let top = (0..=64)
        .map(|i| profile.envelopes(T::from_count(i) / T::lit(64.0)).1)
        .fold(T::zero(), T::max);
    DomainBox::new((T::zero(), T::one()), (T::zero(), top))
}

fn eps_label(e: Eps) -> String {
    e.to_string()
}

/// Builds the `eps`-mesh from the config and solves the oscillating problem.
pub fn solve_eps_from_config<T: Real>(cfg: &RunConfig, eps: Eps) -> Result<(Field<T>, SolveStats<T>), HarnessError> {
    let profile = cfg.profile::<T>()?;
    let spec = cfg.operator::<T>()?;
    let m = &cfg.mesh;
    let mesh = Arc::new(build_mesh_eps_graded(&profile, eps, m.cells_per_period, m.ny, m.style, m.interface_levels_per_eps)?);
    let f = |p| cfg.source.eval(p);
    solve_nonlinear(mesh, &spec, &f, &cfg.solver_options())
        .map_err(|source| HarnessError::Solve { eps: eps_label(eps), source })
}

/// Rows of the x1 table used when an `x1`-dependent profile is replaced by its mesh-top interpolant.
const TOP_TABLE_ROWS: usize = 129;

/// Density seen by the limit problem: exact, or with `mesh.density_from_mesh_top` the
/// density of the polygonal domain the `eps`-meshes actually resolve (the same for every `eps`).
pub fn limit_density<T: Real>(cfg: &RunConfig) -> Result<DensityField<T>, HarnessError> {
    let profile = cfg.profile::<T>()?;
    let m = &cfg.mesh;
    if !m.density_from_mesh_top {
        return Ok(DensityField::new(profile));
    }
    Ok(match m.style.resolve(&profile, m.ny) {
        EpsMeshStyle::Fingers => {
            let levels = FingerLevels::new(&profile, m.ny)?;
            DensityField::interpolated(profile, levels.plus)
        }
        EpsMeshStyle::Graph | EpsMeshStyle::Levels | EpsMeshStyle::Auto => {
            let rows = if profile.is_x1_independent() { 1 } else { TOP_TABLE_ROWS };
            DensityField::new(profile.tabulate(rows, m.cells_per_period)?)
        }
    })
}

/// Unfolding lattice of the config; with `mesh.density_from_mesh_top` its mask follows
/// the resolved top, as the limit density does.
pub fn unfold_grid<T: Real>(cfg: &RunConfig) -> Result<UnfoldGrid<T>, HarnessError> {
    let profile = cfg.profile::<T>()?;
    let (u, m) = (&cfg.unfold, &cfg.mesh);
    if !m.density_from_mesh_top {
        return Ok(UnfoldGrid::new(&profile, u.n1, u.n2, u.ny)?);
    }
    Ok(match m.style.resolve(&profile, m.ny) {
        EpsMeshStyle::Fingers => {
            let levels = FingerLevels::new(&profile, m.ny)?;
            UnfoldGrid::with_top(&profile, u.n1, u.n2, u.ny, |_, y| levels.top_local(y))?
        }
        EpsMeshStyle::Graph | EpsMeshStyle::Levels | EpsMeshStyle::Auto => {
            UnfoldGrid::resolved(&profile, u.n1, u.n2, u.ny, m.cells_per_period)?
        }
    })
}

/// Row counts of the limit mesh below and above `eta_-`. With `mesh.match_limit_levels`
/// and finger `eps`-meshes these are the finger level counts, so both problems share
/// their vertical levels.
pub fn limit_rows<T: Real>(cfg: &RunConfig) -> Result<(usize, usize), HarnessError> {
    let profile = cfg.profile::<T>()?;
    let m = &cfg.mesh;
    if m.match_limit_levels && m.style.resolve(&profile, m.ny) == EpsMeshStyle::Fingers {
        let levels = FingerLevels::new(&profile, m.ny)?;
        let plus = if levels.strips() == 0 { m.limit_ny_plus } else { levels.strips() };
        return Ok((levels.minus.len() - 1, plus));
    }
    Ok((m.limit_ny_minus, m.limit_ny_plus))
}

/// Builds the limit mesh from the config and solves the limit problem; returns the
/// mesh warning when `Omega+` is empty.
pub fn solve_limit_from_config<T: Real>(cfg: &RunConfig) -> Result<(LimitSolution<T>, Option<String>), HarnessError> {
    let density = limit_density::<T>(cfg)?;
    let spec = cfg.operator::<T>()?;
    let (ny_minus, ny_plus) = limit_rows::<T>(cfg)?;
    let built = build_mesh_limit(density.profile(), cfg.mesh.limit_nx, ny_minus, ny_plus)?;
    let f = |p| cfg.source.eval(p);
    let sol = solve_limit(Arc::new(built.mesh), &spec, &density, &f, &cfg.solver_options())?;
    Ok((sol, built.warning))
}

/// Per-halving ratio `(e1 / e0)^(ln 2 / ln(eps0 / eps1))`.
fn halving_ratio(eps0: f64, eps1: f64, e0: f64, e1: f64) -> f64 {
    (e1 / e0).powf(std::f64::consts::LN_2 / (eps0 / eps1).ln())
}

fn ratio_check(name: &str, rows: &[SweepRow], get: impl Fn(&SweepRow) -> f64, limit: f64) -> Check {
    let mut worst: f64 = 0.0;
    let mut strictly = true;
    for w in rows.windows(2) {
        let (a, b) = (get(&w[0]), get(&w[1]));
        strictly &= b < a;
        let r = if a > 0.0 { halving_ratio(w[0].eps, w[1].eps, a, b) } else { f64::INFINITY };
        worst = worst.max(r);
    }
    let values: Vec<String> = rows.iter().map(|r| format!("{:.3e}", get(r))).collect();
    Check {
        name: name.into(),
        pass: strictly && worst <= limit,
        detail: format!("values [{}], worst per-halving ratio {worst:.3} (limit {limit})", values.join(", ")),
    }
}

/// Runs the full sweep described by `cfg`. Does not write files; see [`SweepReport::write`].
pub fn run_sweep<T: Real>(cfg: &RunConfig) -> Result<SweepReport, HarnessError> {
    cfg.validate()?;
    let profile = cfg.profile::<T>()?;
    let spec = cfg.operator::<T>()?;
    let eps_list = cfg.eps()?;
    let hyp = check_hypotheses(&spec, cfg.hypothesis_samples, &hypothesis_box(&profile), cfg.seed)
        .map_err(HarnessError::Hypothesis)?;
    let hypothesis = HypothesisReport {
        n_samples: hyp.n_samples,
        violations: hyp.violations,
        c0_lower: hyp.c0_lower.as_f64(),
        c1_upper: hyp.c1_upper.as_f64(),
        min_monotonicity: hyp.min_monotonicity.as_f64(),
        pass: hyp.pass,
    };

    let density = limit_density::<T>(cfg)?;
    let (limit_sol, limit_warning) = solve_limit_from_config::<T>(cfg)?;
    let limit = LimitData::new(&limit_sol, &density, &spec)?;
    let bank = TestFunctionBank::new(cfg.test_bank_size, limit_sol.u0.mesh());
    let grid = unfold_grid::<T>(cfg)?;

    type PerEps = (SweepRow, BoundsRow, Vec<IterationRecord<f64>>);
    let per_eps: Vec<Result<PerEps, HarnessError>> = eps_list
        .par_iter()
        .map(|&eps| {
            let (field, stats) = solve_eps_from_config::<T>(cfg, eps)?;
            let annotate = |e: HarnessError| match e {
                HarnessError::Fem(source) => HarnessError::Solve { eps: eps_label(eps), source },
                other => other,
            };
            let norms = field_norms(&field, &spec);
            let weak_u = weak_error_u(&field, &limit, &bank).map_err(annotate)?;
            let (e1, e2, em) = weak_error_flux(&field, &limit, &bank).map_err(annotate)?;
            let (_, _, gap) = check_integral_lemma(&field, eps, &grid)?;
            let unfolded = grid.unfolded_norms(&field, eps, &spec)?;
            let row = SweepRow {
                eps: eps.value(),
                dofs: DofMap::new(field.mesh()).len(),
                newton_iters: stats.iterations,
                residual: stats.residual.as_f64(),
                grad_norm: norms.grad_l2.as_f64(),
                weak_err_u: weak_u.as_f64(),
                weak_err_flux1: e1.as_f64(),
                weak_err_flux2_plus: e2.as_f64(),
                weak_err_grad_minus: em.as_f64(),
                lemma32_gap: gap.as_f64(),
            };
            let bounds = BoundsRow {
                eps: eps.value(),
                u_l2: norms.u_l2.as_f64(),
                grad_l2: norms.grad_l2.as_f64(),
                flux_l2: norms.flux_l2.as_f64(),
                unfolded_u: unfolded[0].as_f64(),
                unfolded_grad: unfolded[1].as_f64(),
                unfolded_flux: unfolded[2].as_f64(),
            };
            let log = stats
                .history
                .iter()
                .map(|r| IterationRecord {
                    iteration: r.iteration,
                    residual: r.residual.as_f64(),
                    step: r.step.as_f64(),
                    mode: r.mode,
                    cg_iterations: r.cg_iterations,
                })
                .collect();
            Ok((row, bounds, log))
        })
        .collect();

    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    let mut solver_log = Vec::new();
    for r in per_eps {
        let (row, b, log) = r?;
        solver_log.extend(log.into_iter().map(|rec| (row.eps, rec)));
        rows.push(row);
        bounds.push(b);
    }

    let mut warnings = Vec::new();
    if let Some(w) = &limit_warning {
        warnings.push(w.clone());
    }
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();
    if rows.len() < 2 {
        warnings.push("single eps in eps_list: monotonicity checks skipped".to_string());
    } else {
        checks.push(ratio_check("weak_err_u", &rows, |r| r.weak_err_u, tol.ratio));
        checks.push(ratio_check("weak_err_flux1", &rows, |r| r.weak_err_flux1, tol.flux1_ratio));
        checks.push(ratio_check("weak_err_flux2_plus", &rows, |r| r.weak_err_flux2_plus, tol.ratio));
        checks.push(ratio_check("weak_err_grad_minus", &rows, |r| r.weak_err_grad_minus, tol.ratio));
        let steps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let gaps: Vec<f64> = rows.iter().map(|r| r.lemma32_gap).collect();
        let slope = loglog_slope(&steps, &gaps);
        let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
        let largest = gaps.iter().copied().fold(0.0, f64::max);
        // with eta independent of x1 the unfolding is an exact change of variables,
        // so only the quadrature error of the two sides remains
        checks.push(if profile.is_x1_independent() {
            Check {
                name: "lemma32_gap".into(),
                pass: largest <= tol.lemma_exact_gap,
                detail: format!(
                    "x1-independent profile, exact identity: largest gap {largest:.3e} (limit {:e}), fitted slope {slope:.3}",
                    tol.lemma_exact_gap
                ),
            }
        } else {
            Check {
                name: "lemma32_gap".into(),
                pass: decreasing && slope >= tol.lemma_slope,
                detail: format!("decreasing {decreasing}, fitted slope {slope:.3} (minimum {})", tol.lemma_slope),
            }
        });
        let base = bounds[0].values();
        let mut worst = (0.0f64, "");
        for b in &bounds[1..] {
            for (k, v) in b.values().iter().enumerate() {
                let drift = if base[k] > 0.0 { (v / base[k] - 1.0).abs() } else { v.abs() };
                if drift > worst.0 {
                    worst = (drift, BOUND_NAMES[k]);
                }
            }
        }
        checks.push(Check {
            name: "bounds".into(),
            pass: worst.0 <= tol.bound_variation,
            detail: format!("largest drift {:.3} in {} (limit {})", worst.0, worst.1, tol.bound_variation),
        });
    }
    let gmax = rows.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
    checks.push(Check {
        name: "grad_bound".into(),
        pass: gmax <= cfg.grad_bound,
        detail: format!("max |grad u_eps| = {gmax:.4} (bound {})", cfg.grad_bound),
    });
    let pass = checks.iter().all(|c| c.pass);
    let limit = LimitDiagnostics {
        dofs: DofMap::new(limit_sol.u0.mesh()).len(),
        iterations: limit_sol.stats.iterations,
        residual: limit_sol.stats.residual.as_f64(),
        constraint_residual: limit_sol.constraint_residual.as_f64(),
        warning: limit_warning,
    };
    Ok(SweepReport { rows, bounds, limit, hypothesis, checks, warnings, pass, solver_log })
}

