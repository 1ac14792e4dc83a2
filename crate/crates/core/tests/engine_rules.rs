mod common;

use std::io::{self, Write};
use std::sync::{Arc, Mutex};

use absnet::actors::{FutureId, RuntimeObject, Value};
use absnet::engine::{inject_call, inject_future};
use absnet::scenarios::{self, Behavior, Method};
use absnet::{EngineConfig, EngineError, Message, NetworkGraph, NodeId, ProcedureKind, World};
use common::{converge, oid, static_config};

#[derive(Clone, Default)]
struct Buf(Arc<Mutex<Vec<u8>>>);

impl Write for Buf {
    fn write(&mut self, b: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Buf {
    fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

/// Line of three nodes: a worker on 0 and an echo center on 2.
fn line_world(config: EngineConfig) -> (World, absnet::ObjectId, absnet::ObjectId) {
    let g = Arc::new(NetworkGraph::grid(1, 3));
    let mut w = World::empty(g, config);
    let a = w.mint(NodeId(0));
    w.install(NodeId(0), RuntimeObject::new(a, Behavior::Worker, 8));
    let c = w.mint(NodeId(2));
    w.install(NodeId(2), RuntimeObject::new(c, Behavior::Center { work: 0 }, 8));
    converge(&mut w, 200);
    (w, a, c)
}

#[test]
fn call_and_future_count_one_hop_per_inter_node_arc() {
    let (mut w, a, c) = line_world(static_config());
    let buf = Buf::default();
    w.set_trace(Box::new(buf.clone()));
    inject_call(&mut w, NodeId(0), a, c, Method::Ping, vec![], 0).unwrap();
    w.run_rounds(10).unwrap();
    let trace = buf.text();
    let recv: Vec<&str> = trace.lines().filter(|l| l.contains(" msg_recv_out ")).collect();
    assert_eq!(recv.len(), 2, "{trace}");
    assert!(recv.iter().all(|l| l.ends_with("hops 2")), "{recv:?}");
    // the middle node forwards both, the ends each send one
    let sent: Vec<u64> = w.nodes().iter().map(|n| n.sent_total).collect();
    assert_eq!(sent, vec![1, 2, 1]);
    assert_eq!(w.outstanding_calls(), 0);
    w.audit().unwrap();
}

#[test]
fn local_call_uses_the_self_loop_and_counts_nothing() {
    let g = Arc::new(NetworkGraph::grid(1, 2));
    let mut w = World::empty(g, static_config());
    let a = w.mint(NodeId(1));
    w.install(NodeId(1), RuntimeObject::new(a, Behavior::Worker, 8));
    let c = w.mint(NodeId(1));
    w.install(NodeId(1), RuntimeObject::new(c, Behavior::Center { work: 1 }, 8));
    let buf = Buf::default();
    w.set_trace(Box::new(buf.clone()));
    inject_call(&mut w, NodeId(1), a, c, Method::Ping, vec![], 0).unwrap();
    assert_eq!(w.queue(NodeId(1), NodeId(1)).unwrap().len(), 1);
    w.run_rounds(5).unwrap();
    assert!(buf.text().lines().filter(|l| l.contains(" msg_recv_out ")).all(|l| l.ends_with("hops 0")));
    assert!(w.nodes().iter().all(|n| n.sent_total == 0));
    assert_eq!(w.arc_sent().iter().sum::<u64>(), 2);
}

#[test]
fn unknown_destination_falls_back_to_the_self_loop() {
    let g = Arc::new(NetworkGraph::grid(2, 2));
    let mut w = World::empty(g, static_config());
    let a = w.mint(NodeId(0));
    w.install(NodeId(0), RuntimeObject::new(a, Behavior::Worker, 8));
    inject_call(&mut w, NodeId(0), a, oid(3, 99), Method::Ping, vec![], 0).unwrap();
    let q = w.queue(NodeId(0), NodeId(0)).unwrap();
    assert_eq!(q.len(), 1);
    assert_eq!(q.first().unwrap().hops(), Some(0));
}

#[test]
fn send_from_a_foreign_object_is_rejected() {
    let (mut w, a, c) = line_world(static_config());
    let err = inject_call(&mut w, NodeId(1), a, c, Method::Ping, vec![], 0).unwrap_err();
    assert_eq!(err, EngineError::NotLocal { node: NodeId(1), object: a });
}

#[test]
fn future_ids_are_linear() {
    let (mut w, a, c) = line_world(static_config());
    inject_call(&mut w, NodeId(0), a, c, Method::Ping, vec![], 7).unwrap();
    let again = inject_call(&mut w, NodeId(0), a, c, Method::Ping, vec![], 7).unwrap_err();
    assert_eq!(again, EngineError::ReusedFuture(FutureId { caller: a, seq: 7 }));

    let stray = FutureId { caller: a, seq: 8 };
    let err = inject_future(&mut w, NodeId(2), c, a, stray, Value::Unit).unwrap_err();
    assert_eq!(err, EngineError::UnmatchedFuture(stray));
    assert!(err.is_invariant_violation());
}

#[test]
fn migration_preconditions() {
    let (mut w, a, _) = line_world(static_config());
    assert_eq!(
        w.object_send_in(NodeId(0), a, NodeId(0)).unwrap_err(),
        EngineError::SelfMigration { node: NodeId(0), object: a }
    );
    assert_eq!(
        w.object_send_in(NodeId(0), a, NodeId(2)).unwrap_err(),
        EngineError::NotNeighbour { from: NodeId(0), to: NodeId(2) }
    );
    assert_eq!(
        w.object_send_in(NodeId(1), a, NodeId(2)).unwrap_err(),
        EngineError::NotLocal { node: NodeId(1), object: a }
    );
}

#[test]
fn migration_moves_the_object_and_keeps_its_state() {
    let (mut w, a, _) = line_world(static_config());
    let before = w.node(NodeId(0)).objects[0].clone();
    w.object_send_in(NodeId(0), a, NodeId(1)).unwrap();
    assert!(w.node(NodeId(0)).objects.is_empty());
    let e = w.node(NodeId(0)).table.get(a).unwrap();
    assert_eq!((e.next_hop, e.distance), (NodeId(1), 1));
    // in transit: hosted nowhere, still counted once
    assert!(w.nodes().iter().all(|n| !n.table.contains(a)));
    w.audit().unwrap();
    w.run_rounds(1).unwrap();
    let after = &w.node(NodeId(1)).objects[0];
    assert_eq!(after, &before);
    assert!(w.node(NodeId(1)).table.contains(a));
    assert_eq!(w.counters().migrations, 1);
}

#[test]
fn table_send_puts_one_snapshot_on_each_neighbour_arc() {
    let g = Arc::new(NetworkGraph::grid(3, 3));
    let mut w = World::empty(Arc::clone(&g), static_config());
    w.table_send(NodeId(4));
    for &nb in g.neighbours(NodeId(4)) {
        let q = w.queue(NodeId(4), nb).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.first().unwrap().kind(), "Table");
    }
    assert_eq!(w.queue(NodeId(4), NodeId(4)).unwrap().len(), 0);
    assert_eq!(w.counters().table_messages, 4);
}

#[test]
fn control_messages_coalesce_per_arc() {
    let g = Arc::new(NetworkGraph::grid(1, 2));
    let mut w = World::empty(Arc::clone(&g), static_config());
    w.table_send(NodeId(0));
    w.table_send(NodeId(0));
    assert_eq!(w.queue(NodeId(0), NodeId(1)).unwrap().len(), 1);

    let literal = EngineConfig {
        coalesce_control: false,
        ..static_config()
    };
    let mut w = World::empty(g, literal);
    w.table_send(NodeId(0));
    w.table_send(NodeId(0));
    assert_eq!(w.queue(NodeId(0), NodeId(1)).unwrap().len(), 2);
}

#[test]
fn isolated_node_never_gossips() {
    let g = Arc::new(NetworkGraph::grid(1, 1));
    let mut w = World::new(g, &scenarios::independent_tasks(3), EngineConfig::default()).unwrap();
    w.run_rounds(50).unwrap();
    assert!(w.gate().is_some());
    let c = w.counters();
    assert_eq!((c.table_messages, c.load_messages, c.migrations), (0, 0, 0));
}

#[test]
fn nothing_is_sampled_or_migrated_before_the_gate() {
    let g = Arc::new(NetworkGraph::grid(2, 4));
    let mut w = World::new(g, &scenarios::independent_tasks(40), EngineConfig::default()).unwrap();
    while w.gate().is_none() {
        assert!(w.samples().is_empty());
        assert_eq!(w.counters().migrations, 0);
        w.round().unwrap();
    }
    let gate = w.gate().unwrap();
    w.run_samples(5).unwrap();
    let s = w.samples();
    assert_eq!(s[0].index, 0);
    assert_eq!(s[0].round, gate.round);
    // sample k is taken at the first node boundary at or past k intervals
    let step = w.config().sample_interval;
    for (k, x) in s.iter().enumerate() {
        assert_eq!(x.index, k as u64);
        assert!(x.transitions >= gate.transitions + k as u64 * step);
    }
}

#[test]
fn startup_node_must_exist() {
    let g = Arc::new(NetworkGraph::grid(2, 2));
    let cfg = EngineConfig {
        startup_node: 9,
        ..EngineConfig::default()
    };
    let err = World::new(g, &scenarios::ring(4), cfg).err().unwrap();
    assert_eq!(err, EngineError::NoStartupNode(NodeId(9)));
    assert!(!err.is_invariant_violation());
}

#[test]
fn worlds_are_deterministic_per_seed() {
    let run = |seed| {
        let g = Arc::new(NetworkGraph::grid(2, 4));
        let cfg = EngineConfig {
            seed,
            procedure: ProcedureKind::BerenbrinkComm,
            ..EngineConfig::default()
        };
        let mut w = World::new(g, &scenarios::star(8, 3), cfg).unwrap();
        w.run_until_gate(100_000).unwrap();
        w.run_samples(60).unwrap();
        (w.samples().to_vec(), w.placement(), w.counters())
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).1, run(4).1);
}

#[test]
fn queued_messages_never_include_output_left_behind() {
    let g = Arc::new(NetworkGraph::grid(2, 2));
    let mut w = World::new(g, &scenarios::ring(8), EngineConfig::default()).unwrap();
    for _ in 0..400 {
        w.round().unwrap();
        w.audit().unwrap();
        for q in w.queues() {
            for m in q.iter() {
                if let Message::Object(o) = m {
                    assert!(o.output_queue.is_empty());
                }
            }
        }
    }
}
