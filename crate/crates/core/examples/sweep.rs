//! Runs a sweep from a JSON config and prints the report: `cargo run --example sweep -- cfg.json`.

use homlab::harness::{run_sweep, RunConfig};

fn main() {
    let path = std::env::args().nth(1).expect("usage: sweep <config.json>");
    let cfg = RunConfig::from_path(path.as_ref()).unwrap_or_else(|e| panic!("{e}"));
    let t = std::time::Instant::now();
    let report = run_sweep::<f64>(&cfg).unwrap_or_else(|e| panic!("{e}"));
    print!("{}", report.csv());
    print!("{}", report.bounds_csv());
    print!("{}", report.checks_text());
    println!("limit: {:?}", report.limit);
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
}
