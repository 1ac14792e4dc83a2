//! Places one object per node on a 3x3 grid, lets table gossip settle and
//! prints node 0's routing table next to the hop distances.

use std::sync::Arc;

use absnet::actors::RuntimeObject;
use absnet::scenarios::Behavior;
use absnet::{EngineConfig, NetworkGraph, NodeId, ProcedureKind, World};

fn main() {
    let g = Arc::new(NetworkGraph::grid(3, 3));
    let cfg = EngineConfig {
        procedure: ProcedureKind::None,
        ..EngineConfig::default()
    };
    let mut w = World::empty(Arc::clone(&g), cfg);
    for n in g.nodes() {
        let id = w.mint(n);
        w.install(n, RuntimeObject::new(id, Behavior::Worker, 32));
    }

    let mut rounds = 0;
    while w.nodes().iter().any(|n| n.table.len() < g.node_count()) {
        w.round().unwrap();
        rounds += 1;
    }
    println!("every node knows every object after {rounds} rounds\n");

    let bfs = g.bfs(NodeId(0));
    let placement = w.placement();
    println!("object  next  dist  bfs");
    for (o, e) in w.node(NodeId(0)).table.iter() {
        let host = placement[&o];
        println!("{o:<7} {:<5} {:<5} {}", e.next_hop, e.distance, bfs[host.index()].unwrap());
    }
}
