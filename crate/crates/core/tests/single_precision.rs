use std::sync::Arc;

use homlab::fem::{l2_error, solve_nonlinear};
use homlab::geometry::{build_mesh_eps, Eps};
use homlab::harness::{run_sweep, RunConfig};
use homlab::solver::SolverOptions;

#[test]
fn f32_manufactured_solution() {
    let flat = homlab::f32::EtaProfile::constant(1.0).unwrap();
    let mesh: Arc<homlab::f32::Mesh> = Arc::new(build_mesh_eps(&flat, Eps::from_k(2).unwrap(), 8, 16).unwrap());
    let spec = homlab::f32::OperatorSpec::radial_regularized();
    let f = |p: [f32; 2]| 1.0 + 1.0 / ((2.0 - p[1]) * (2.0 - p[1]));
    let (u, stats) = solve_nonlinear(mesh, &spec, &f, &SolverOptions::default()).unwrap();
    assert!(stats.residual.is_finite());
    assert!(l2_error(&u, |p| p[1] - p[1] * p[1] / 2.0) < 2e-3);
}

#[test]
fn f32_sweep_agrees_with_f64() {
    let cfg = RunConfig::from_json_str(
        r#"{
  "profile": {"family": "sine_bump", "params": [1.0, 1.0]},
  "operator": {"family": "radial_regularized"},
  "source": {"id": "constant"},
  "eps_list": [0.25, 0.125],
  "mesh": {"cells_per_period": 8, "ny": 16, "limit_nx": 8},
  "unfold": {"n1": 32, "n2": 8, "ny": 8}
}"#,
    )
    .unwrap();
    let single = run_sweep::<f32>(&cfg).unwrap();
    let double = run_sweep::<f64>(&cfg).unwrap();
    // single precision on stiffness matrices with condition ~1e4 leaves ~1e-3 relative error
    for (a, b) in single.bounds.iter().zip(&double.bounds) {
        assert!((a.u_l2 - b.u_l2).abs() < 1e-2 * b.u_l2, "{} vs {}", a.u_l2, b.u_l2);
        assert!((a.grad_l2 - b.grad_l2).abs() < 1e-2 * b.grad_l2, "{} vs {}", a.grad_l2, b.grad_l2);
    }
    assert_eq!(single.rows.len(), double.rows.len());
    assert!(single.limit.constraint_residual < 1e-4);
}
