//! Runs the star scenario over five seeds in parallel and prints the
//! per-seed summary the sweep writes.

use absnet::cli::{sweep, RunConfig, ScenarioSpec};
use absnet::ProcedureKind;

fn main() {
    let out = std::env::temp_dir().join("absnet-sweep-example");
    let cfg = RunConfig {
        scenario: ScenarioSpec::Name("star".into()),
        procedure: ProcedureKind::BerenbrinkComm,
        samples: 300,
        ..RunConfig::default()
    };
    let results = sweep(&cfg, &[1, 2, 3, 4, 5], &out).unwrap();
    assert!(results.iter().all(|(_, r)| r.is_ok()));
    print!("{}", std::fs::read_to_string(out.join("summary.csv")).unwrap());
    println!("outputs in {}", out.display());
}
