//! 200 busy workers start on one corner of a 4x8 grid. Compares how evenly
//! the plain and the neutral-move balancing cycles spread them.

use absnet::cli::{run, RunConfig, ScenarioSpec};
use absnet::ProcedureKind;

fn main() {
    for procedure in [ProcedureKind::Berenbrink, ProcedureKind::BerenbrinkNeutral] {
        let cfg = RunConfig {
            scenario: ScenarioSpec::Name("independent_tasks".into()),
            procedure,
            samples: 600,
            ..RunConfig::default()
        };
        let r = run(&cfg, None, None).unwrap();
        println!(
            "{procedure:<20} migrations {:>5}  final max load {:.2}  load std {:.3}",
            r.migrations, r.final_window.max_load, r.final_window.load_std
        );
    }
}
