use std::collections::BTreeMap;
use std::sync::Arc;

use absnet::engine::AppRecord;
use absnet::scenarios::{self, Behavior, ChordClient, ChordNode, Method, Scenario};
use absnet::{EngineConfig, NetworkGraph, ObjectId, ProcedureKind, World};

fn world(g: NetworkGraph, s: &Scenario, procedure: ProcedureKind, seed: u64) -> World {
    let cfg = EngineConfig {
        seed,
        procedure,
        record_app_log: true,
        ..EngineConfig::default()
    };
    let mut w = World::new(Arc::new(g), s, cfg).unwrap();
    w.run_until_gate(1_000_000).unwrap().expect("setup finishes");
    w
}

fn clients(w: &World) -> Vec<&ChordClient> {
    w.objects()
        .filter_map(|o| match &o.behavior {
            Behavior::Client(c) => Some(c),
            _ => None,
        })
        .collect()
}

fn members(w: &World) -> Vec<(ObjectId, &ChordNode)> {
    w.objects()
        .filter_map(|o| match &o.behavior {
            Behavior::Chord(n) => Some((o.id, n.as_ref())),
            _ => None,
        })
        .collect()
}

#[test]
fn independent_tasks_have_two_hundred_busy_workers_and_no_traffic() {
    let mut w = world(NetworkGraph::grid(4, 8), &scenarios::independent_tasks(200), ProcedureKind::Berenbrink, 1);
    assert_eq!(w.objects().count(), 201);
    w.run_samples(50).unwrap();
    assert_eq!(w.active_objects(), 200);
    assert!(w.samples().iter().all(|s| s.sent.iter().all(|&x| x == 0)));
    let moved_calls = w.app_log().len();
    w.run_samples(100).unwrap();
    assert_eq!(w.app_log().len(), moved_calls);
    w.audit().unwrap();
}

#[test]
fn co_located_stars_exchange_no_inter_node_messages() {
    let mut w = world(NetworkGraph::grid(2, 2), &scenarios::star(4, 5), ProcedureKind::None, 0);
    w.run_samples(50).unwrap();
    assert!(w.counters().calls_delivered > 100);
    assert!(w.samples().iter().all(|s| s.sent.iter().all(|&x| x == 0)));
}

#[test]
fn star_traffic_follows_fringe_center_edges() {
    let mut w = world(NetworkGraph::grid(2, 4), &scenarios::star(8, 3), ProcedureKind::BerenbrinkComm, 2);
    let from = w.app_log().len();
    w.run_samples(100).unwrap();
    let comm = scenarios::star(8, 3).comm_graph(w.objects());
    for r in &w.app_log()[from..] {
        let (a, b) = match r {
            AppRecord::Call { from, to, .. } | AppRecord::Future { from, to, .. } => (*from, *to),
        };
        assert!(comm.partners[&a].contains(&b), "{a} -> {b} is not a star edge");
    }
    assert_eq!(comm.subjects.len(), 8);
}

#[test]
fn one_lap_is_one_call_per_member() {
    let s = Scenario::Ring {
        objects: 8,
        tokens: 1,
        laps: Some(1),
        work: 3,
    };
    let mut w = world(NetworkGraph::grid(2, 2), &s, ProcedureKind::None, 0);
    w.run_rounds(500).unwrap();
    let ring: Vec<ObjectId> = w
        .objects()
        .filter(|o| matches!(o.behavior, Behavior::Ring(_)))
        .map(|o| o.id)
        .collect();
    let (hand_overs, kick_offs): (Vec<_>, Vec<_>) = w
        .app_log()
        .iter()
        .filter_map(|r| match r {
            AppRecord::Call { from, method: Method::Pass, .. } => Some(*from),
            _ => None,
        })
        .partition(|from| ring.contains(from));
    assert_eq!(kick_offs.len(), 1);
    assert_eq!(hand_overs.len(), 8);
    assert!(w.is_idle());
    assert_eq!(w.outstanding_calls(), 0);
    w.audit().unwrap();
}

#[test]
fn two_member_ring_circulates_on_the_self_loop() {
    let s = Scenario::Ring {
        objects: 2,
        tokens: 1,
        laps: Some(50),
        work: 1,
    };
    let mut w = world(NetworkGraph::grid(1, 2), &s, ProcedureKind::None, 0);
    w.run_rounds(2_000).unwrap();
    assert!(w.is_idle());
    assert_eq!(w.nodes()[0].sent_total, 0);
    assert_eq!(w.nodes()[1].sent_total, 0);
}

#[test]
fn ring_traffic_follows_successor_links() {
    let s = scenarios::ring(32);
    let mut w = world(NetworkGraph::grid(2, 4), &s, ProcedureKind::Berenbrink, 5);
    let from = w.app_log().len();
    w.run_samples(100).unwrap();
    let comm = s.comm_graph(w.objects());
    let mut calls = 0;
    for r in &w.app_log()[from..] {
        if let AppRecord::Call { from, to, .. } = r {
            assert!(comm.partners[from].contains(to));
            calls += 1;
        }
    }
    assert!(calls > 100);
    w.audit().unwrap();
}

#[test]
fn chord_members_each_own_one_key() {
    let w = world(NetworkGraph::grid(4, 8), &Scenario::ChordProbe { objects: 128, bits: 7 }, ProcedureKind::None, 0);
    let ms = members(&w);
    assert_eq!(ms.len(), 128);
    for k in 0..128u32 {
        let owners = ms.iter().filter(|(_, n)| n.owns(k)).count();
        assert_eq!(owners, 1, "key {k}");
    }
    assert!(ms.iter().all(|(_, n)| n.owns(n.key)));
}

#[test]
fn chord_fingers_point_at_successors() {
    let w = world(NetworkGraph::grid(2, 4), &Scenario::ChordProbe { objects: 20, bits: 7 }, ProcedureKind::None, 3);
    let ms = members(&w);
    let mut keys: Vec<u32> = ms.iter().map(|(_, n)| n.key).collect();
    keys.sort();
    let successor = |x: u32| *keys.iter().find(|&&k| k >= x).unwrap_or(&keys[0]);
    for (_, n) in &ms {
        assert_eq!(n.succ.unwrap().1, successor((n.key + 1) % 128));
        for (i, f) in n.fingers.iter().enumerate() {
            let start = (n.key + (1 << i)) % 128;
            assert_eq!(f.unwrap().1, successor(start), "finger {i} of {}", n.key);
        }
    }
}

fn probe(g: NetworkGraph, objects: usize, procedure: ProcedureKind, seed: u64) -> ChordClient {
    let mut w = world(g, &Scenario::ChordProbe { objects, bits: 7 }, procedure, seed);
    for _ in 0..400_000 {
        w.round().unwrap();
        if clients(&w)[0].probe_done() {
            break;
        }
    }
    w.audit().unwrap();
    let c = clients(&w)[0].clone();
    assert!(c.probe_done(), "probe did not finish");
    c
}

#[test]
fn chord_probe_gets_back_every_put() {
    let c = probe(NetworkGraph::grid(4, 8), 128, ProcedureKind::None, 0);
    assert_eq!(c.completed, 256);
    assert_eq!(c.hits, 128);
    assert_eq!((c.misses, c.mismatches), (0, 0));
    assert!(c.max_forwards <= 7, "{} forwards", c.max_forwards);
}

#[test]
fn chord_probe_survives_migrations_on_a_sparse_ring() {
    let c = probe(NetworkGraph::grid(2, 4), 24, ProcedureKind::BerenbrinkNeutral, 9);
    assert_eq!((c.hits, c.misses, c.mismatches), (128, 0, 0));
    assert!(c.max_forwards <= 7);
}

#[test]
fn chord_consumers_never_read_a_wrong_value() {
    let mut w = world(NetworkGraph::grid(4, 8), &scenarios::chord_dht(128, 7), ProcedureKind::BerenbrinkComm, 4);
    w.run_samples(150).unwrap();
    w.audit().unwrap();
    let cs = clients(&w);
    assert_eq!(cs.len(), 128);
    let done: u64 = cs.iter().map(|c| c.completed).sum();
    let hits: u64 = cs.iter().map(|c| c.hits).sum();
    assert!(done > 50, "only {done} requests completed");
    assert!(hits > 0);
    assert!(cs.iter().all(|c| c.mismatches == 0 && c.max_forwards <= 7));
    // every stored value is the one producers write for its key
    for (_, n) in members(&w) {
        for (&k, &v) in &n.store {
            assert!(n.owns(k));
            assert_eq!(v, scenarios::value_for(k));
        }
    }
}

#[test]
fn chord_member_traffic_follows_peer_links() {
    let s = scenarios::chord_dht(64, 7);
    let mut w = world(NetworkGraph::grid(2, 4), &s, ProcedureKind::Berenbrink, 6);
    let from = w.app_log().len();
    w.run_samples(80).unwrap();
    let ms: BTreeMap<ObjectId, &ChordNode> = members(&w).into_iter().collect();
    let entries: BTreeMap<ObjectId, ObjectId> = w
        .objects()
        .filter_map(|o| match &o.behavior {
            Behavior::Client(c) => Some((o.id, c.entry.unwrap())),
            _ => None,
        })
        .collect();
    for r in &w.app_log()[from..] {
        let AppRecord::Call { from, to, method, args } = r else { continue };
        match (ms.get(from), ms.get(to)) {
            (Some(n), Some(_)) => assert!(n.peers().contains(to), "{from} -> {to} is not a peer link"),
            (None, Some(_)) => assert_eq!(entries[from], *to),
            (Some(_), None) => {
                assert_eq!(*method, Method::Reply);
                assert!(entries.contains_key(to));
                assert_eq!(args.len(), 4);
            }
            (None, None) => panic!("client to client call {from} -> {to}"),
        }
    }
}
