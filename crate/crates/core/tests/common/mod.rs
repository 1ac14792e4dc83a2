#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::Arc;

use absnet::actors::RuntimeObject;
use absnet::scenarios::Behavior;
use absnet::{EngineConfig, NetworkGraph, NodeId, ObjectId, ProcedureKind, World};

pub fn static_config() -> EngineConfig {
    EngineConfig {
        procedure: ProcedureKind::None,
        ..EngineConfig::default()
    }
}

/// A world with `per_node[i]` idle workers on node `i` and nothing else.
pub fn static_world(graph: NetworkGraph, per_node: &[usize]) -> World {
    let graph = Arc::new(graph);
    let mut w = World::empty(Arc::clone(&graph), static_config());
    for n in graph.nodes() {
        for _ in 0..per_node[n.index()] {
            let id = w.mint(n);
            w.install(n, RuntimeObject::new(id, Behavior::Worker, 32));
        }
    }
    w
}

/// Runs until the routing dump has not changed for a full gossip period and
/// no object is in transit. Returns the number of rounds it took.
pub fn converge(w: &mut World, max_rounds: u64) -> u64 {
    let quiet_needed = w.config().gossip_cadence + 1;
    let start = w.round_count();
    let mut last = w.routing_dump();
    let mut quiet = 0;
    while quiet < quiet_needed {
        assert!(
            w.round_count() - start < max_rounds,
            "routing did not settle in {max_rounds} rounds"
        );
        w.round().unwrap();
        let now = w.routing_dump();
        let moving = w
            .queues()
            .iter()
            .any(|q| q.iter().any(|m| m.kind() == "Object"));
        if now == last && !moving {
            quiet += 1;
        } else {
            quiet = 0;
            last = now;
        }
    }
    w.round_count() - start
}

/// Compares every table entry with breadth-first distances from the host
/// of each object. Returns the first mismatch.
pub fn bfs_mismatch(w: &World) -> Option<String> {
    let graph = w.graph();
    let dist = oracle_distances(graph);
    let placement = w.placement();
    for n in w.nodes() {
        if n.table.len() != placement.len() {
            return Some(format!(
                "node {} knows {} objects, {} exist",
                n.id,
                n.table.len(),
                placement.len()
            ));
        }
        for (o, e) in n.table.iter() {
            let host = placement[&o];
            let want = dist[n.id.index()][host.index()];
            if e.distance != want {
                return Some(format!(
                    "node {} has {o} at distance {}, BFS says {want}",
                    n.id, e.distance
                ));
            }
            let via = dist[e.next_hop.index()][host.index()];
            let on_path = if want == 0 {
                e.next_hop == n.id
            } else {
                graph.is_neighbour(n.id, e.next_hop) && via + 1 == want
            };
            if !on_path {
                return Some(format!(
                    "node {} routes {o} via {} which is not on a shortest path",
                    n.id, e.next_hop
                ));
            }
        }
    }
    None
}

/// All-pairs hop distances by breadth-first search over the arc list.
pub fn oracle_distances(g: &NetworkGraph) -> Vec<Vec<u32>> {
    let n = g.node_count();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in g.arcs() {
        if a != b {
            adj[a.index()].push(b.index());
        }
    }
    (0..n)
        .map(|s| {
            let mut d = vec![u32::MAX; n];
            d[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if d[v] == u32::MAX {
                        d[v] = d[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            d
        })
        .collect()
}

pub fn oid(node: u32, seq: u32) -> ObjectId {
    ObjectId::new(NodeId(node), seq)
}
