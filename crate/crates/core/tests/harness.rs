use homlab::fem::{integrate_field, l2_error, Field, Integrand, Region};
use homlab::geometry::Eps;
use homlab::harness::{
    limit_density, run_sweep, solve_eps_from_config, solve_limit_from_config, weak_error_flux, weak_error_u,
    HarnessError, LimitData, RunConfig, TestFunctionBank,
};
use homlab::quadrature::SEVEN_POINT;

fn config(profile: &str, operator: &str, source: &str, eps_list: &str) -> RunConfig {
    RunConfig::from_json_str(&format!(
        r#"{{
  "profile": {profile},
  "operator": {operator},
  "source": {source},
  "eps_list": {eps_list},
  "mesh": {{"cells_per_period": 8, "ny": 16, "limit_nx": 8}},
  "unfold": {{"n1": 32, "n2": 8, "ny": 8}}
}}"#
    ))
    .unwrap()
}

const SINE: &str = r#"{"family": "sine_bump", "params": [1.0, 1.0]}"#;
const FLAT: &str = r#"{"family": "constant", "params": [1.0]}"#;
const RADIAL: &str = r#"{"family": "radial_regularized"}"#;
const ONE: &str = r#"{"id": "constant"}"#;

#[test]
fn reports_are_bit_identical() {
    let cfg = config(SINE, RADIAL, ONE, "[0.25, 0.125]");
    let a = run_sweep::<f64>(&cfg).unwrap();
    let b = run_sweep::<f64>(&cfg).unwrap();
    assert_eq!(a.csv(), b.csv());
    assert_eq!(a.bounds_csv(), b.bounds_csv());
    assert_eq!(a.plot_data(), b.plot_data());
}

#[test]
fn csv_and_plot_data_layout() {
    let r = run_sweep::<f64>(&config(SINE, RADIAL, ONE, "[0.25, 0.125]")).unwrap();
    let csv = r.csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eps,dofs,newton_iters,residual,grad_norm,weak_err_u,weak_err_flux1,weak_err_flux2_plus,weak_err_grad_minus,lemma32_gap"
    );
    assert_eq!(lines.count(), 2);
    let plot = r.plot_data();
    let blocks: Vec<&str> = plot.split("\n\n").filter(|b| !b.trim().is_empty()).collect();
    assert!(blocks.len() >= 5);
    for b in blocks {
        for line in b.lines().filter(|l| !l.starts_with('#')) {
            let fields: Vec<f64> = line.split_whitespace().map(|s| s.parse().unwrap()).collect();
            assert_eq!(fields.len(), 2, "{line}");
        }
    }
}

#[test]
fn single_eps_skips_monotonicity() {
    let r = run_sweep::<f64>(&config(SINE, RADIAL, ONE, "[0.25]")).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert!(r.warnings.iter().any(|w| w.contains("single eps")));
    assert!(r.checks.iter().all(|c| !c.name.starts_with("weak_err")));
    assert!(r.pass);
}

#[test]
fn indefinite_operator_rejected_before_solving() {
    let op = r#"{"family": "linear_matrix", "matrix": [[1.0, 3.0], [3.0, 1.0]]}"#;
    match run_sweep::<f64>(&config(SINE, op, ONE, "[0.25, 0.125]")) {
        Err(HarnessError::Hypothesis(_)) => {}
        other => panic!("expected a hypothesis violation, got {other:?}"),
    }
}

#[test]
fn constant_member_matches_direct_quadrature() {
    let cfg = config(SINE, RADIAL, ONE, "[0.25]");
    let spec = cfg.operator::<f64>().unwrap();
    let density = limit_density::<f64>(&cfg).unwrap();
    let (sol, _) = solve_limit_from_config::<f64>(&cfg).unwrap();
    let limit = LimitData::new(&sol, &density, &spec).unwrap();
    let (u, _) = solve_eps_from_config::<f64>(&cfg, Eps::from_k(4).unwrap()).unwrap();

    let bank = TestFunctionBank::new(1, sol.u0.mesh());
    let metric = weak_error_u(&u, &limit, &bank).unwrap();

    let eps_side = integrate_field(u.mesh(), Integrand::Value(&u), |_| 1.0, Region::Whole).unwrap();
    let mesh = sol.u0.mesh();
    let (mut limit_side, mut area) = (0.0, 0.0);
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle_points(t);
        let a = mesh.signed_area(t);
        for (p, l, w) in SEVEN_POINT.points(&tri) {
            limit_side += w * a * density.h(p).unwrap() * sol.u0.eval_in(t, l);
        }
        area += a;
    }
    let direct = (eps_side - limit_side).abs() / area.sqrt();
    assert!((metric - direct).abs() <= 1e-12 * (1.0 + direct), "{metric} vs {direct}");
}

#[test]
fn zero_source_gives_zero_errors() {
    let r = run_sweep::<f64>(&config(SINE, RADIAL, r#"{"id": "zero"}"#, "[0.25, 0.125]")).unwrap();
    for row in &r.rows {
        assert_eq!(row.weak_err_u, 0.0);
        assert_eq!(row.weak_err_flux1, 0.0);
        assert_eq!(row.weak_err_flux2_plus, 0.0);
        assert_eq!(row.weak_err_grad_minus, 0.0);
        assert_eq!(row.lemma32_gap, 0.0);
    }
}

/// `|| grad (v - exact) ||_{L2}` by seven-point quadrature.
fn grad_error(v: &Field<f64>, exact: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let mesh = v.mesh();
    let mut total = 0.0;
    for t in 0..mesh.triangle_count() {
        let g = v.gradient(t);
        let a = mesh.signed_area(t);
        for (p, _, w) in SEVEN_POINT.points(&mesh.triangle_points(t)) {
            let e = exact(p);
            total += w * a * ((g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2));
        }
    }
    total.sqrt()
}

#[test]
fn flat_profile_error_is_discretization_error() {
    let identity = r#"{"family": "linear_matrix", "matrix": [[1.0, 0.0], [0.0, 1.0]]}"#;
    let cfg = config(FLAT, identity, r#"{"id": "sine_x2"}"#, "[0.25]");
    let spec = cfg.operator::<f64>().unwrap();
    let density = limit_density::<f64>(&cfg).unwrap();
    let (sol, warning) = solve_limit_from_config::<f64>(&cfg).unwrap();
    assert!(warning.is_some());
    let limit = LimitData::new(&sol, &density, &spec).unwrap();
    let bank = TestFunctionBank::new(12, sol.u0.mesh());
    let (u, _) = solve_eps_from_config::<f64>(&cfg, Eps::from_k(4).unwrap()).unwrap();

    let pi = std::f64::consts::PI;
    let exact = |p: [f64; 2]| (pi * p[1] / 2.0).sin();
    let exact_grad = |p: [f64; 2]| [0.0, pi / 2.0 * (pi * p[1] / 2.0).cos()];
    // with Omega_eps = Omega and h = 1 the weak errors are bounded by the two discretization errors
    let value_bound = l2_error(&u, exact) + l2_error(&sol.u0, exact);
    let grad_bound = grad_error(&u, exact_grad) + grad_error(&sol.u0, exact_grad);
    let eu = weak_error_u(&u, &limit, &bank).unwrap();
    assert!(eu <= value_bound, "{eu} > {value_bound}");
    let (e1, e2, em) = weak_error_flux(&u, &limit, &bank).unwrap();
    assert_eq!((e1, e2), (0.0, 0.0));
    assert!(em <= grad_bound, "{em} > {grad_bound}");
}

#[test]
fn identity_operator_sweep_converges() {
    let mut cfg = RunConfig::from_json_str(include_str!("../../../configs/flagship.json")).unwrap();
    cfg.operator = config(SINE, r#"{"family": "linear_matrix", "matrix": [[1.0, 0.0], [0.0, 1.0]]}"#, ONE, "[0.25]").operator;
    let r = run_sweep::<f64>(&cfg).unwrap();
    let u: Vec<f64> = r.rows.iter().map(|row| row.weak_err_u).collect();
    assert!(u.windows(2).all(|w| w[1] <= 0.8 * w[0]), "{u:?}");
    // qbar vanishes for the identity, so flux1 measures the cancellation of d1 u_eps alone
    let e1: Vec<f64> = r.rows.iter().map(|row| row.weak_err_flux1).collect();
    assert!(e1.windows(2).all(|w| w[1] < w[0]), "{e1:?}");
    assert!(r.pass, "{}", r.checks_text());
}
