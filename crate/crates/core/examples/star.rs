//! One star per node on a 4x8 grid. Prints inter-node message rates and the
//! histogram of total fringe distance per center for the plain cycle and the
//! communication-aware one.

use absnet::cli::{prepare, RunConfig, ScenarioSpec};
use absnet::metrics::{aggregate, distance_histogram, final_window, total_distances};
use absnet::ProcedureKind;

fn main() {
    for procedure in [ProcedureKind::Berenbrink, ProcedureKind::BerenbrinkComm] {
        let cfg = RunConfig {
            scenario: ScenarioSpec::Name("star".into()),
            procedure,
            seed: 1,
            ..RunConfig::default()
        };
        let mut w = prepare(&cfg).unwrap();
        w.run_samples(cfg.samples).unwrap();

        let fw = final_window(&aggregate(w.samples()), cfg.final_window);
        let scenario = cfg.resolve_scenario(w.graph().node_count()).unwrap();
        let comm = scenario.comm_graph(w.objects());
        let totals = total_distances(w.graph(), &w.placement(), &comm);
        println!("{procedure}: msg avg {:.2}, load std {:.2}", fw.msg_avg, fw.load_std);
        for (d, n) in distance_histogram(&totals) {
            println!("  distance {d:>2}: {}", "#".repeat(n));
        }
    }
}
