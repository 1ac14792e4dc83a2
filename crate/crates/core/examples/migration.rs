//! Moves ring members around by hand while tokens circulate and shows that
//! the objects exchange exactly the same calls and replies as when nothing
//! moves. Only hop counts change.

use std::sync::Arc;

use absnet::engine::AppRecord;
use absnet::scenarios::Scenario;
use absnet::{EngineConfig, NetworkGraph, NodeId, ProcedureKind, World};

fn run(migrate: bool) -> (Vec<AppRecord>, u64, u64) {
    let ring = Scenario::Ring {
        objects: 8,
        tokens: 2,
        laps: Some(4),
        work: 2,
    };
    let cfg = EngineConfig {
        procedure: ProcedureKind::None,
        record_app_log: true,
        ..EngineConfig::default()
    };
    let mut w = World::new(Arc::new(NetworkGraph::grid(2, 2)), &ring, cfg).unwrap();
    w.run_until_gate(10_000).unwrap();
    let mut turn = 0;
    while !w.is_idle() {
        w.round().unwrap();
        if migrate && w.round_count() % 4 == 0 {
            // whatever sits first on the next node moves to its first neighbour
            let node = NodeId(turn % 4);
            if let Some(o) = w.node(node).objects.first().map(|o| o.id) {
                let to = w.graph().neighbours(node)[0];
                w.object_send_in(node, o, to).unwrap();
            }
            turn += 1;
        }
    }
    let mut log = w.app_log().to_vec();
    log.sort();
    let hops = w.nodes().iter().map(|n| n.sent_total).sum();
    (log, w.counters().migrations, hops)
}

fn main() {
    let (a, _, hops_a) = run(false);
    let (b, moves, hops_b) = run(true);
    println!("without migration: {} messages, {hops_a} inter-node sends", a.len());
    println!("with {moves} migrations: {} messages, {hops_b} inter-node sends", b.len());
    println!("same calls and replies: {}", a == b);
}
