//! A ring of 128 objects with a token per member, on a 4x8 grid. Prints the
//! smoothed inter-node message average every 100 samples for two procedures.

use absnet::cli::{prepare, RunConfig, ScenarioSpec};
use absnet::metrics::{aggregate, smooth};
use absnet::ProcedureKind;

fn main() {
    for procedure in [ProcedureKind::Berenbrink, ProcedureKind::BerenbrinkComm] {
        let cfg = RunConfig {
            scenario: ScenarioSpec::Name("ring".into()),
            procedure,
            ..RunConfig::default()
        };
        let mut w = prepare(&cfg).unwrap();
        w.run_samples(cfg.samples).unwrap();
        let rows = aggregate(w.samples());
        let msgs: Vec<f64> = rows.iter().map(|r| r.msg_avg).collect();
        let smoothed = smooth(&msgs, cfg.smooth_window);
        let line: Vec<String> = smoothed.iter().step_by(100).map(|m| format!("{m:.1}")).collect();
        println!("{procedure:<16} {}", line.join(" "));
    }
}
