//! `homlab`: configuration-driven driver for the homogenization laboratory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homlab::geometry::{DensityField, Eps};
use homlab::harness::{
    hypothesis_box, limit_rows, run_sweep, solve_eps_from_config, solve_limit_from_config, unfold_grid, ConfigError,
    HarnessError, RunConfig,
};
use homlab::operator::check_hypotheses;
use homlab::unfolding::{check_integral_lemma, unfold_field, UnfoldError};

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

const SOLVER_KEYS: &str = "tolerances.newton_rtol, tolerances.max_newton_iters, tolerances.cg_rtol";
const EPS_MESH_KEYS: &str = "mesh.style, mesh.cells_per_period, mesh.ny, mesh.interface_levels_per_eps";
const LIMIT_MESH_KEYS: &str =
    "mesh.limit_nx, mesh.limit_ny_minus, mesh.limit_ny_plus, mesh.match_limit_levels, mesh.density_from_mesh_top";

#[derive(Parser)]
#[command(name = "homlab", version, about = "Homogenization of monotone problems on oscillating domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WithEps {
    #[command(flatten)]
    common: Common,
    /// Period `1/k`, written `1/8` or `0.125`; must appear in `eps_list`.
    /// Defaults to the only entry of a one-element `eps_list`.
    #[arg(long)]
    eps: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every eps of the list and the limit problem, compare, and write the report.
    #[command(after_help = sweep_keys())]
    Sweep(Common),
    /// Solve the oscillating problem for one eps.
    #[command(name = "solve-eps", after_help = solve_eps_keys())]
    SolveEps(WithEps),
    /// Solve the limit problem.
    #[command(name = "solve-limit", after_help = solve_limit_keys())]
    SolveLimit(Common),
    /// Solve for one eps and unfold the solution onto the unfolding lattice.
    #[command(after_help = unfold_keys())]
    Unfold(WithEps),
    /// Sample the density on a lattice of the limit domain.
    #[command(after_help = density_keys())]
    Density(Common),
    /// Audit monotonicity, coercivity and growth of the configured operator.
    #[command(name = "check-operator", after_help = check_operator_keys())]
    CheckOperator(Common),
}

fn keys(list: &[&str]) -> String {
    format!("Config keys read: {}", list.join(", "))
}

fn sweep_keys() -> String {
    keys(&[
        "profile.*, operator.*, source.*, eps_list",
        EPS_MESH_KEYS,
        LIMIT_MESH_KEYS,
        "tolerances.*, unfold.n1, unfold.n2, unfold.ny, test_bank_size, hypothesis_samples, grad_bound, seed, output_dir",
    ])
}

fn solve_eps_keys() -> String {
    keys(&["profile.*, operator.*, source.*, eps_list", EPS_MESH_KEYS, SOLVER_KEYS, "output_dir"])
}

fn solve_limit_keys() -> String {
    keys(&["profile.*, operator.*, source.*", "mesh.ny, mesh.style", LIMIT_MESH_KEYS, SOLVER_KEYS, "output_dir"])
}

fn unfold_keys() -> String {
    keys(&[
        "profile.*, operator.*, source.*, eps_list",
        EPS_MESH_KEYS,
        "mesh.density_from_mesh_top",
        SOLVER_KEYS,
        "unfold.n1, unfold.n2, unfold.ny, output_dir",
    ])
}

fn density_keys() -> String {
    keys(&["profile.*, density.nx, density.ny, output_dir"])
}

fn check_operator_keys() -> String {
    keys(&["profile.*, operator.*, hypothesis_samples, seed, output_dir"])
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match e {
            HarnessError::Config(_)
            | HarnessError::Hypothesis(_)
            | HarnessError::Geometry(_)
            | HarnessError::IncompatibleGeometry(_)
            | HarnessError::Unfold(UnfoldError::GridTooCoarse { .. } | UnfoldError::EmptyGrid) => EXIT_CONFIG,
            _ => EXIT_SOLVER,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { code: EXIT_CONFIG, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_SOLVER, message: format!("i/o: {e}") }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.into() }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = RunConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn parse_eps(s: &str) -> Result<Eps, Failure> {
    let value = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| config_failure(format!("--eps: cannot parse `{s}`")))?;
            let d: f64 = d.trim().parse().map_err(|_| config_failure(format!("--eps: cannot parse `{s}`")))?;
            n / d
        }
        None => s.trim().parse().map_err(|_| config_failure(format!("--eps: cannot parse `{s}`")))?,
    };
    Eps::from_value(value).map_err(|e| config_failure(format!("--eps: {e}")))
}

fn select_eps(cfg: &RunConfig, arg: Option<&str>) -> Result<Eps, Failure> {
    let list = cfg.eps()?;
    let eps = match arg {
        Some(s) => parse_eps(s)?,
        None if list.len() == 1 => list[0],
        None => return Err(config_failure("--eps is required when eps_list has more than one entry")),
    };
    if !list.contains(&eps) {
        return Err(config_failure(format!("--eps {eps} is not in eps_list")));
    }
    Ok(eps)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn sweep(common: &Common) -> Result<u8, Failure> {
    let (cfg, out) = load(common)?;
    let report = run_sweep::<f64>(&cfg)?;
    report.write(&out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report.checks_text());
    Ok(if report.pass { 0 } else { EXIT_ACCEPTANCE })
}

fn solve_eps(args: &WithEps) -> Result<u8, Failure> {
    let (cfg, out) = load(&args.common)?;
    let eps = select_eps(&cfg, args.eps.as_deref())?;
    let (u, stats) = solve_eps_from_config::<f64>(&cfg, eps)?;
    let k = eps.k();
    u.write_text(create(&out.join(format!("u_eps_k{k}.txt")))?)?;
    u.mesh().write_text(create(&out.join(format!("mesh_eps_k{k}.txt")))?)?;
    let mut d = create(&out.join(format!("diagnostics_eps_k{k}.txt")))?;
    writeln!(d, "eps {eps}")?;
    writeln!(d, "vertices {}", u.mesh().vertex_count())?;
    writeln!(d, "iterations {}", stats.iterations)?;
    writeln!(d, "residual {:e}", stats.residual)?;
    writeln!(d, "tolerance {:e}", stats.tolerance)?;
    d.flush()?;
    println!("eps {eps}: converged in {} iterations, residual {:.3e}", stats.iterations, stats.residual);
    Ok(0)
}

fn solve_limit(common: &Common) -> Result<u8, Failure> {
    let (cfg, out) = load(common)?;
    let (sol, warning) = solve_limit_from_config::<f64>(&cfg)?;
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let (ny_minus, ny_plus) = limit_rows::<f64>(&cfg)?;
    sol.u0.write_text(create(&out.join("u0.txt"))?)?;
    sol.u0.mesh().write_text(create(&out.join("mesh_limit.txt"))?)?;
    sol.write_quad_csv(create(&out.join("limit_quad.csv"))?)?;
    let mut d = create(&out.join("diagnostics_limit.txt"))?;
    writeln!(d, "rows {ny_minus} {ny_plus}")?;
    writeln!(d, "iterations {}", sol.stats.iterations)?;
    writeln!(d, "residual {:e}", sol.stats.residual)?;
    writeln!(d, "constraint_residual {:e}", sol.constraint_residual)?;
    d.flush()?;
    println!(
        "limit: converged in {} iterations, residual {:.3e}, constraint residual {:.3e}",
        sol.stats.iterations, sol.stats.residual, sol.constraint_residual
    );
    Ok(0)
}

fn unfold(args: &WithEps) -> Result<u8, Failure> {
    let (cfg, out) = load(&args.common)?;
    let eps = select_eps(&cfg, args.eps.as_deref())?;
    let (u, _) = solve_eps_from_config::<f64>(&cfg, eps)?;
    let grid = unfold_grid::<f64>(&cfg)?;
    let unfolded = unfold_field(&u, eps, &grid).map_err(HarnessError::from)?;
    unfolded.write_csv(&grid, create(&out.join(format!("unfolded_k{}.csv", eps.k())))?)?;
    let (lhs, rhs, gap) = check_integral_lemma(&u, eps, &grid).map_err(HarnessError::from)?;
    println!("eps {eps}: {} masked points, integral {lhs:.12e} vs unfolded {rhs:.12e}, gap {gap:.3e}", grid.masked_count());
    Ok(0)
}

fn density(common: &Common) -> Result<u8, Failure> {
    let (cfg, out) = load(common)?;
    let field = DensityField::new(cfg.profile::<f64>()?);
    let rows = field.lattice(cfg.density.nx, cfg.density.ny).map_err(HarnessError::from)?;
    let mut w = create(&out.join("density.csv"))?;
    writeln!(w, "x1,x2,h")?;
    for [x1, x2, h] in &rows {
        writeln!(w, "{x1:.17e},{x2:.17e},{h:.17e}")?;
    }
    w.flush()?;
    println!("{} density samples", rows.len());
    Ok(0)
}

fn check_operator(common: &Common) -> Result<u8, Failure> {
    let (cfg, out) = load(common)?;
    let spec = cfg.operator::<f64>()?;
    let bx = hypothesis_box(&cfg.profile::<f64>()?);
    let r = check_hypotheses(&spec, cfg.hypothesis_samples, &bx, cfg.seed).map_err(HarnessError::Hypothesis)?;
    let text = format!(
        "samples {}\nviolations {}\nc0_lower {:e}\nc1_upper {:e}\nmin_monotonicity {:e}\npass {}\n",
        r.n_samples, r.violations, r.c0_lower, r.c1_upper, r.min_monotonicity, r.pass
    );
    fs::write(out.join("check_operator.txt"), &text)?;
    print!("{text}");
    Ok(if r.pass { 0 } else { EXIT_CONFIG })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(c) => sweep(c),
        Command::SolveEps(a) => solve_eps(a),
        Command::SolveLimit(c) => solve_limit(c),
        Command::Unfold(a) => unfold(a),
        Command::Density(c) => density(c),
        Command::CheckOperator(c) => check_operator(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
