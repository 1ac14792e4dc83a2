//! Round-robin scheduler over the node-controller and object rules.
//!
//! One call to [`World::round`] visits every node in index order and runs
//! four phases on it:
//!
//! 1. drain one message from every non-empty incoming arc, arcs in source
//!    order;
//! 2. step every local object that can make progress, once;
//! 3. flush object output queues onto the network;
//! 4. on its cadence, run the migration procedure, announce the local load
//!    and gossip the routing table.
//!
//! Every rule application counts as one transition. Samples are taken every
//! `sample_interval` transitions once the setup gate is open, at node
//! boundaries.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::{ActorError, CallMsg, FutureId, FutureMsg, IdMint, RuntimeObject, Value};
use crate::actors::DEFAULT_HISTORY_CAPACITY;
use crate::balancer::{self, NeighbourLoads, NodeView, ProcedureKind, ProcedureParams};
use crate::metrics::MetricsSample;
use crate::netgraph::{ArcIdx, ArcQueue, Message, NetworkGraph, NodeId};
use crate::routing::{ObjectId, RoutingTable};
use crate::scenarios::{Method, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    pub procedure: ProcedureKind,
    pub params: ProcedureParams,
    /// Transitions between samples.
    pub sample_interval: u64,
    /// Rounds between migration cycles.
    pub migration_cadence: u64,
    /// Rounds between unconditional table broadcasts; changed tables are
    /// always sent in the round they change.
    pub gossip_cadence: u64,
    pub history_capacity: usize,
    pub startup_node: u32,
    /// Queue length above which enqueues are counted as over the limit.
    pub queue_soft_limit: Option<usize>,
    /// Keep a log of every Call and Future put on the network.
    pub record_app_log: bool,
    /// At most one Table and one Load message per arc in flight; later
    /// sends wait until the arc has delivered the earlier one.
    pub coalesce_control: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            seed: 0,
            procedure: ProcedureKind::Berenbrink,
            params: ProcedureParams::default(),
            sample_interval: 1000,
            migration_cadence: 5,
            gossip_cadence: 10,
            history_capacity: DEFAULT_HISTORY_CAPACITY,
            startup_node: 0,
            queue_soft_limit: None,
            record_app_log: false,
            coalesce_control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("node {node} does not host object {object}")]
    NotLocal { node: NodeId, object: ObjectId },
    #[error("node {to} is not a neighbour of node {from}")]
    NotNeighbour { from: NodeId, to: NodeId },
    #[error("object {object} cannot migrate from node {node} to itself")]
    SelfMigration { node: NodeId, object: ObjectId },
    #[error("startup node {0} is not in the graph")]
    NoStartupNode(NodeId),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error("conservation broken for {kind}: created {created}, delivered {delivered}, in flight {in_flight}")]
    Conservation {
        kind: &'static str,
        created: u64,
        delivered: u64,
        in_flight: u64,
    },
    #[error("locality broken: {0}")]
    Locality(String),
    #[error("future {0} answered without an outstanding call")]
    UnmatchedFuture(FutureId),
    #[error("future {0} used by two calls")]
    ReusedFuture(FutureId),
    #[error("no rule applicable since round {0}")]
    Stalled(u64),
}

impl EngineError {
    /// Errors that indicate a broken runtime invariant rather than a
    /// configuration problem.
    pub fn is_invariant_violation(&self) -> bool {
        !matches!(self, EngineError::NoStartupNode(_))
    }
}

/// A Call or Future as it left its sender, without routing details.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AppRecord {
    Call {
        from: ObjectId,
        to: ObjectId,
        method: Method,
        args: Vec<Value>,
    },
    Future {
        from: ObjectId,
        to: ObjectId,
        value: Value,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub calls_created: u64,
    pub calls_delivered: u64,
    pub futures_created: u64,
    pub futures_delivered: u64,
    pub migrations: u64,
    pub objects_created: u64,
    pub table_messages: u64,
    pub load_messages: u64,
    /// Enqueues that left a queue above the soft limit.
    pub over_soft_limit: u64,
}

pub struct NodeState {
    pub id: NodeId,
    pub table: RoutingTable,
    pub objects: Vec<RuntimeObject>,
    pub loads: NeighbourLoads,
    mint: IdMint,
    rng: ChaCha8Rng,
    table_dirty: bool,
    last_load_sent: Option<u32>,
    sent_since_sample: u64,
    pub sent_total: u64,
}

impl NodeState {
    pub fn load(&self) -> u32 {
        self.objects.iter().filter(|o| o.is_active()).count() as u32
    }

    fn position(&self, o: ObjectId) -> Option<usize> {
        self.objects.iter().position(|x| x.id == o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Gate {
    pub round: u64,
    pub transitions: u64,
}

pub struct World {
    graph: Arc<NetworkGraph>,
    queues: Vec<ArcQueue>,
    nodes: Vec<NodeState>,
    config: EngineConfig,
    round: u64,
    transitions: u64,
    gate: Option<Gate>,
    next_sample_at: u64,
    samples: Vec<MetricsSample>,
    latency_since_sample: BTreeMap<u32, u64>,
    migrations_since_sample: u64,
    counters: Counters,
    /// Futures of calls that have been sent and not yet answered.
    outstanding: HashSet<FutureId>,
    arc_sent: Vec<u64>,
    table_in_flight: Vec<bool>,
    load_in_flight: Vec<bool>,
    last_object_step: u64,
    app_log: Vec<AppRecord>,
    trace: Option<Box<dyn Write + Send>>,
}

impl World {
    /// Builds a world whose startup node hosts the scenario's coordinator.
    pub fn new(
        graph: Arc<NetworkGraph>,
        scenario: &Scenario,
        config: EngineConfig,
    ) -> Result<World, EngineError> {
        let startup = NodeId(config.startup_node);
        if startup.index() >= graph.node_count() {
            return Err(EngineError::NoStartupNode(startup));
        }
        let mut w = World::empty(graph, config);
        let cap = w.config.history_capacity;
        let node = &mut w.nodes[startup.index()];
        let id = node.mint.fresh();
        node.table.register(id, startup, 0);
        node.objects
            .push(RuntimeObject::with_main(id, scenario.coordinator(w.config.seed), cap));
        w.counters.objects_created += 1;
        Ok(w)
    }

    /// A world with no objects at all.
    pub fn empty(graph: Arc<NetworkGraph>, config: EngineConfig) -> World {
        let nodes = graph
            .nodes()
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(id.0 as u64);
                NodeState {
                    id,
                    table: RoutingTable::new(id),
                    objects: Vec::new(),
                    loads: NeighbourLoads::default(),
                    mint: IdMint::new(id),
                    rng,
                    table_dirty: false,
                    last_load_sent: None,
                    sent_since_sample: 0,
                    sent_total: 0,
                }
            })
            .collect();
        World {
            queues: graph.make_queues(),
            arc_sent: vec![0; graph.arc_count()],
            table_in_flight: vec![false; graph.arc_count()],
            load_in_flight: vec![false; graph.arc_count()],
            graph,
            nodes,
            config,
            round: 0,
            transitions: 0,
            gate: None,
            next_sample_at: 0,
            samples: Vec::new(),
            latency_since_sample: BTreeMap::new(),
            migrations_since_sample: 0,
            counters: Counters::default(),
            outstanding: HashSet::new(),
            last_object_step: 0,
            app_log: Vec::new(),
            trace: None,
        }
    }

    /// Installs an object directly, bypassing setup. Counts as creation.
    pub fn install(&mut self, node: NodeId, object: RuntimeObject) {
        let n = &mut self.nodes[node.index()];
        n.table.register(object.id, node, 0);
        n.table_dirty = true;
        n.objects.push(object);
        self.counters.objects_created += 1;
    }

    /// Fresh identifier from `node`'s counter.
    pub fn mint(&mut self, node: NodeId) -> ObjectId {
        self.nodes[node.index()].mint.fresh()
    }

    /// Writes one line per rule application to `out`.
    pub fn set_trace(&mut self, out: Box<dyn Write + Send>) {
        self.trace = Some(out);
    }

    pub fn graph(&self) -> &Arc<NetworkGraph> {
        &self.graph
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn round_count(&self) -> u64 {
        self.round
    }

    pub fn transitions(&self) -> u64 {
        self.transitions
    }

    pub fn gate(&self) -> Option<Gate> {
        self.gate
    }

    pub fn samples(&self) -> &[MetricsSample] {
        &self.samples
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn node(&self, n: NodeId) -> &NodeState {
        &self.nodes[n.index()]
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn queue(&self, src: NodeId, dst: NodeId) -> Option<&ArcQueue> {
        self.graph.arc_index(src, dst).map(|i| &self.queues[i])
    }

    pub fn queues(&self) -> &[ArcQueue] {
        &self.queues
    }

    /// Application messages sent over each arc, self-loops included.
    pub fn arc_sent(&self) -> &[u64] {
        &self.arc_sent
    }

    pub fn app_log(&self) -> &[AppRecord] {
        &self.app_log
    }

    /// Rounds completed since an object last took a step.
    pub fn idle_rounds(&self) -> u64 {
        self.round - self.last_object_step
    }

    /// Completed migration cycles since the gate.
    pub fn cycles(&self) -> u64 {
        self.gate
            .map_or(0, |g| (self.round - g.round) / self.config.migration_cadence.max(1))
    }

    /// Hosted objects plus objects travelling inside Object messages.
    pub fn objects(&self) -> impl Iterator<Item = &RuntimeObject> {
        let hosted = self.nodes.iter().flat_map(|n| n.objects.iter());
        let moving = self.queues.iter().flat_map(|q| q.iter()).filter_map(|m| match m {
            Message::Object(o) => Some(&**o),
            _ => None,
        });
        hosted.chain(moving)
    }

    /// Host of every object; objects in transit count at their arc's target.
    pub fn placement(&self) -> BTreeMap<ObjectId, NodeId> {
        let mut out = BTreeMap::new();
        for n in &self.nodes {
            for o in &n.objects {
                out.insert(o.id, n.id);
            }
        }
        for (i, q) in self.queues.iter().enumerate() {
            for m in q.iter() {
                if let Message::Object(o) = m {
                    out.insert(o.id, self.graph.arc(i).1);
                }
            }
        }
        out
    }

    pub fn loads(&self) -> Vec<u32> {
        self.nodes.iter().map(NodeState::load).collect()
    }

    pub fn active_objects(&self) -> u32 {
        self.nodes.iter().map(NodeState::load).sum()
    }

    /// Text dump of every node's table, headed by `node N` lines.
    pub fn routing_dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {}\n", n.id));
            out.push_str(&n.table.dump());
        }
        out
    }

    fn trace(&mut self, rule: &str, node: NodeId, detail: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            let _ = writeln!(t, "{} {rule} {node} {}", self.round, detail());
        }
    }

    fn enqueue(&mut self, arc: ArcIdx, m: Message) {
        let q = &mut self.queues[arc];
        q.enqueue(m);
        if let Some(limit) = self.config.queue_soft_limit {
            if q.len() > limit {
                self.counters.over_soft_limit += 1;
            }
        }
    }

    /// Puts an application message on the arc chosen by `node`'s table.
    fn forward(&mut self, node: NodeId, mut m: Message) -> NodeId {
        let dest = m.dest().expect("application message");
        let next = self.nodes[node.index()].table.next(dest, node);
        let arc = self
            .graph
            .arc_index(node, next)
            .expect("routes only point at neighbours");
        if next != node {
            m.add_hop();
            let n = &mut self.nodes[node.index()];
            n.sent_since_sample += 1;
            n.sent_total += 1;
        }
        self.arc_sent[arc] += 1;
        self.enqueue(arc, m);
        next
    }

    /// Sends a Call or Future emitted by local object `o`.
    pub fn msg_send_in(&mut self, node: NodeId, o: ObjectId, m: Message) -> Result<(), EngineError> {
        if !self.nodes[node.index()].table.contains(o) {
            return Err(EngineError::NotLocal { node, object: o });
        }
        match &m {
            Message::Call(c) => {
                self.counters.calls_created += 1;
                if !self.outstanding.insert(c.future) {
                    return Err(EngineError::ReusedFuture(c.future));
                }
                if self.config.record_app_log {
                    self.app_log.push(AppRecord::Call {
                        from: c.caller,
                        to: c.dest,
                        method: c.method,
                        args: c.args.clone(),
                    });
                }
            }
            Message::Future(f) => {
                self.counters.futures_created += 1;
                if !self.outstanding.remove(&f.future) {
                    return Err(EngineError::UnmatchedFuture(f.future));
                }
                if self.config.record_app_log {
                    self.app_log.push(AppRecord::Future {
                        from: o,
                        to: f.dest,
                        value: f.value.clone(),
                    });
                }
            }
            other => panic!("msg_send_in with {} message", other.kind()),
        }
        let kind = m.kind();
        let dest = m.dest().unwrap();
        let next = self.forward(node, m);
        self.transitions += 1;
        self.trace("msg_send_in", node, || format!("{kind} {o}->{dest} via {next}"));
        Ok(())
    }

    /// Serializes local object `o` onto the arc towards neighbour `to`.
    pub fn object_send_in(&mut self, node: NodeId, o: ObjectId, to: NodeId) -> Result<(), EngineError> {
        if to == node {
            return Err(EngineError::SelfMigration { node, object: o });
        }
        if !self.graph.is_neighbour(node, to) {
            return Err(EngineError::NotNeighbour { from: node, to });
        }
        let n = &mut self.nodes[node.index()];
        let pos = n
            .position(o)
            .filter(|_| n.table.contains(o))
            .ok_or(EngineError::NotLocal { node, object: o })?;
        let obj = n.objects.remove(pos);
        n.table.replace(o, to, 1);
        n.table_dirty = true;
        let arc = self.graph.arc_index(node, to).unwrap();
        self.enqueue(arc, Message::Object(Box::new(obj)));
        self.counters.migrations += 1;
        self.migrations_since_sample += 1;
        self.transitions += 1;
        self.trace("object_send_in", node, || format!("{o} to {to}"));
        Ok(())
    }

    /// Sends a snapshot of `node`'s table to every neighbour. With
    /// coalescing on, arcs still carrying an earlier snapshot are skipped and
    /// the table stays dirty until every neighbour has been served.
    pub fn table_send(&mut self, node: NodeId) {
        let n = &mut self.nodes[node.index()];
        n.table_dirty = false;
        let snapshot = Arc::new(n.table.clone());
        let graph = Arc::clone(&self.graph);
        let mut sent = 0;
        for &nb in graph.neighbours(node) {
            let arc = graph.arc_index(node, nb).unwrap();
            if self.config.coalesce_control && self.table_in_flight[arc] {
                self.nodes[node.index()].table_dirty = true;
                continue;
            }
            self.table_in_flight[arc] = true;
            self.enqueue(arc, Message::Table(Arc::clone(&snapshot)));
            self.counters.table_messages += 1;
            self.transitions += 1;
            sent += 1;
        }
        let entries = snapshot.len();
        self.trace("table_send", node, || format!("{entries} entries to {sent} neighbours"));
    }

    fn load_send(&mut self, node: NodeId, load: u32) {
        self.nodes[node.index()].last_load_sent = Some(load);
        let graph = Arc::clone(&self.graph);
        for &nb in graph.neighbours(node) {
            let arc = graph.arc_index(node, nb).unwrap();
            if self.config.coalesce_control && self.load_in_flight[arc] {
                // resend once the arc clears
                self.nodes[node.index()].last_load_sent = None;
                continue;
            }
            self.load_in_flight[arc] = true;
            self.enqueue(arc, Message::Load { origin: node, load });
            self.counters.load_messages += 1;
            self.transitions += 1;
        }
        self.trace("load_send", node, || load.to_string());
    }

    /// Handles the front message of one incoming arc.
    fn receive(&mut self, node: NodeId, arc: ArcIdx) -> Result<(), EngineError> {
        let from = self.graph.arc(arc).0;
        let m = self.queues[arc]
            .dequeue_first()
            .expect("receive is only called on non-empty arcs");
        self.transitions += 1;
        let round = self.round;
        match m {
            Message::Table(_) => self.table_in_flight[arc] = false,
            Message::Load { .. } => self.load_in_flight[arc] = false,
            _ => {}
        }
        let n = &mut self.nodes[node.index()];
        match m {
            Message::Table(t) => {
                if n.table.update(from, &t) {
                    n.table_dirty = true;
                }
                self.trace("table_recv", node, || format!("from {from}"));
            }
            Message::Load { origin, load } => {
                n.loads.record(origin, load, round);
                self.trace("load_recv", node, || format!("{origin} {load}"));
            }
            Message::Object(obj) => {
                let id = obj.id;
                n.table.replace(id, node, 0);
                n.table_dirty = true;
                n.objects.push(*obj);
                self.trace("object_recv_out", node, || format!("{id} from {from}"));
            }
            m => {
                let dest = m.dest().unwrap();
                if n.table.contains(dest) {
                    let hops = m.hops().unwrap();
                    let is_call = matches!(m, Message::Call(_));
                    let pos = n.position(dest).ok_or_else(|| {
                        EngineError::Locality(format!("node {node} claims {dest} but does not host it"))
                    })?;
                    n.objects[pos].deliver(m)?;
                    if is_call {
                        self.counters.calls_delivered += 1;
                    } else {
                        self.counters.futures_delivered += 1;
                    }
                    if self.gate.is_some() {
                        *self.latency_since_sample.entry(hops).or_insert(0) += 1;
                    }
                    self.trace("msg_recv_out", node, || format!("{dest} hops {hops}"));
                } else {
                    let next = self.forward(node, m);
                    self.trace("route_further", node, || format!("{dest} via {next}"));
                }
            }
        }
        Ok(())
    }

    fn step_objects(&mut self, node: NodeId) -> Result<(), EngineError> {
        let creation_allowed = self.gate.is_none();
        let mut i = 0;
        while i < self.nodes[node.index()].objects.len() {
            let n = &mut self.nodes[node.index()];
            if !n.objects[i].can_step() {
                i += 1;
                continue;
            }
            let report = n.objects[i].step(node, &mut n.mint, creation_allowed)?;
            let id = n.objects[i].id;
            if report.stepped {
                self.transitions += 1;
                self.last_object_step = self.round;
                self.trace("cn_red", node, || id.to_string());
            }
            for created in report.created {
                self.new_object_in(node, id, created)?;
            }
            if report.setup_finished && self.gate.is_none() {
                self.open_gate(node);
            }
            i += 1;
        }
        Ok(())
    }

    fn new_object_in(
        &mut self,
        node: NodeId,
        creator: ObjectId,
        object: RuntimeObject,
    ) -> Result<(), EngineError> {
        let n = &mut self.nodes[node.index()];
        if !n.table.contains(creator) {
            return Err(EngineError::NotLocal { node, object: creator });
        }
        let id = object.id;
        n.table.register(id, node, 0);
        n.table_dirty = true;
        n.objects.push(object);
        self.counters.objects_created += 1;
        self.transitions += 1;
        self.trace("new_object_in", node, || format!("{id} by {creator}"));
        Ok(())
    }

    fn open_gate(&mut self, node: NodeId) {
        self.gate = Some(Gate {
            round: self.round,
            transitions: self.transitions,
        });
        for n in &mut self.nodes {
            n.sent_since_sample = 0;
        }
        self.latency_since_sample.clear();
        self.migrations_since_sample = 0;
        self.next_sample_at = self.transitions;
        self.trace("setup_gate", node, String::new);
    }

    fn flush(&mut self, node: NodeId) -> Result<(), EngineError> {
        for i in 0..self.nodes[node.index()].objects.len() {
            while let Some(m) = self.nodes[node.index()].objects[i].output_queue.pop_front() {
                let id = self.nodes[node.index()].objects[i].id;
                self.msg_send_in(node, id, m)?;
            }
        }
        Ok(())
    }

    fn cadence(&mut self, node: NodeId) -> Result<(), EngineError> {
        let cycle_round = match self.gate {
            Some(g) => {
                let c = self.config.migration_cadence.max(1);
                self.round > g.round && (self.round - g.round) % c == 0
            }
            None => false,
        };
        if cycle_round && self.config.procedure != ProcedureKind::None {
            let moves = {
                let n = &mut self.nodes[node.index()];
                let view = NodeView {
                    node,
                    neighbours: self.graph.neighbours(node),
                    objects: &n.objects,
                    table: &n.table,
                    loads: &n.loads,
                };
                balancer::run_cycle(self.config.procedure, &self.config.params, &view, &mut n.rng)
            };
            for (o, to) in moves {
                self.object_send_in(node, o, to)?;
            }
        }
        if self.gate.is_some() && !self.graph.neighbours(node).is_empty() {
            let n = &self.nodes[node.index()];
            let load = n.load();
            if balancer::should_broadcast(n.last_load_sent, load, cycle_round) {
                self.load_send(node, load);
            }
        }
        let n = &self.nodes[node.index()];
        let refresh = self.round % self.config.gossip_cadence.max(1) == 0;
        if (n.table_dirty || refresh) && !self.graph.neighbours(node).is_empty() {
            self.table_send(node);
        }
        Ok(())
    }

    fn maybe_sample(&mut self) {
        let Some(_) = self.gate else { return };
        while self.transitions >= self.next_sample_at {
            let sample = MetricsSample {
                index: self.samples.len() as u64,
                round: self.round,
                transitions: self.transitions,
                loads: self.loads(),
                sent: self
                    .nodes
                    .iter_mut()
                    .map(|n| std::mem::take(&mut n.sent_since_sample))
                    .collect(),
                latency: std::mem::take(&mut self.latency_since_sample),
                migrations: std::mem::take(&mut self.migrations_since_sample),
            };
            self.samples.push(sample);
            self.next_sample_at += self.config.sample_interval.max(1);
        }
    }

    /// Runs one engine round over all nodes.
    pub fn round(&mut self) -> Result<(), EngineError> {
        for u in 0..self.nodes.len() {
            let node = NodeId(u as u32);
            let incoming = self.graph.incoming(node).to_vec();
            for arc in incoming {
                if !self.queues[arc].is_empty() {
                    self.receive(node, arc)?;
                }
            }
            self.step_objects(node)?;
            self.flush(node)?;
            self.cadence(node)?;
            self.maybe_sample();
        }
        self.round += 1;
        Ok(())
    }

    pub fn run_rounds(&mut self, rounds: u64) -> Result<(), EngineError> {
        for _ in 0..rounds {
            self.round()?;
        }
        Ok(())
    }

    /// Runs until the setup gate opens, at most `max_rounds` rounds.
    pub fn run_until_gate(&mut self, max_rounds: u64) -> Result<Option<Gate>, EngineError> {
        for _ in 0..max_rounds {
            if self.gate.is_some() {
                break;
            }
            self.round()?;
        }
        Ok(self.gate)
    }

    /// Runs until `n` samples exist; the sample list is cut to exactly `n`.
    /// Fails if a whole gossip period passes without any transition.
    pub fn run_samples(&mut self, n: usize) -> Result<(), EngineError> {
        let mut quiet_since = self.round;
        let mut before = self.transitions;
        while self.samples.len() < n {
            self.round()?;
            if self.transitions != before {
                quiet_since = self.round;
                before = self.transitions;
            } else if self.round - quiet_since > self.config.gossip_cadence.max(1) {
                return Err(EngineError::Stalled(quiet_since));
            }
        }
        self.samples.truncate(n);
        Ok(())
    }

    /// Runs until `cycles` migration cycles have passed since the gate.
    pub fn run_cycles(&mut self, cycles: u64) -> Result<(), EngineError> {
        let Some(g) = self.gate else {
            return Ok(());
        };
        let end = g.round + cycles * self.config.migration_cadence.max(1) + 1;
        while self.round < end {
            self.round()?;
        }
        Ok(())
    }

    /// No message of any kind is queued and no object has work left.
    pub fn is_idle(&self) -> bool {
        self.queues.iter().all(|q| q.iter().all(|m| !m.is_application() && !matches!(m, Message::Object(_))))
            && self.nodes.iter().all(|n| {
                n.objects
                    .iter()
                    .all(|o| !o.is_active() && o.input_queue.is_empty())
            })
    }

    /// Checks message conservation, locality coherence and the population.
    pub fn audit(&self) -> Result<(), EngineError> {
        let mut calls = 0;
        let mut futures = 0;
        let mut moving = Vec::new();
        for q in &self.queues {
            for m in q.iter() {
                match m {
                    Message::Call(_) => calls += 1,
                    Message::Future(_) => futures += 1,
                    Message::Object(o) => {
                        if !o.output_queue.is_empty() {
                            return Err(EngineError::Locality(format!(
                                "object {} migrated with unsent output",
                                o.id
                            )));
                        }
                        moving.push(o.id)
                    }
                    _ => {}
                }
            }
        }
        let pending_out: u64 = self
            .nodes
            .iter()
            .flat_map(|n| n.objects.iter())
            .map(|o| o.output_queue.len() as u64)
            .sum();
        let c = &self.counters;
        if c.calls_created != c.calls_delivered + calls {
            return Err(EngineError::Conservation {
                kind: "Call",
                created: c.calls_created,
                delivered: c.calls_delivered,
                in_flight: calls,
            });
        }
        if c.futures_created != c.futures_delivered + futures {
            return Err(EngineError::Conservation {
                kind: "Future",
                created: c.futures_created,
                delivered: c.futures_delivered,
                in_flight: futures,
            });
        }
        if pending_out != 0 {
            return Err(EngineError::Locality(format!(
                "{pending_out} messages left in output queues between rounds"
            )));
        }
        let mut seen = HashSet::new();
        for n in &self.nodes {
            for o in &n.objects {
                if !n.table.contains(o.id) {
                    return Err(EngineError::Locality(format!(
                        "node {} hosts {} without a local route",
                        n.id, o.id
                    )));
                }
                if !seen.insert(o.id) {
                    return Err(EngineError::Locality(format!("{} hosted twice", o.id)));
                }
            }
            for (id, e) in n.table.iter() {
                if e.distance == 0 && n.position(id).is_none() {
                    return Err(EngineError::Locality(format!(
                        "node {} claims {id} without hosting it",
                        n.id
                    )));
                }
            }
        }
        for id in moving {
            if !seen.insert(id) {
                return Err(EngineError::Locality(format!("{id} hosted while in transit")));
            }
        }
        if seen.len() as u64 != c.objects_created {
            return Err(EngineError::Locality(format!(
                "{} objects exist but {} were created",
                seen.len(),
                c.objects_created
            )));
        }
        Ok(())
    }

    /// Calls sent and not yet answered.
    pub fn outstanding_calls(&self) -> usize {
        self.outstanding.len()
    }
}

/// Delivers a bare Call to `dest` through `node`, for tests and examples
/// that drive the network without a scenario. The message is stamped as
/// coming from `caller`.
pub fn inject_call(
    world: &mut World,
    node: NodeId,
    caller: ObjectId,
    dest: ObjectId,
    method: Method,
    args: Vec<Value>,
    seq: u32,
) -> Result<(), EngineError> {
    let m = Message::Call(CallMsg {
        dest,
        caller,
        method,
        args,
        future: FutureId { caller, seq },
        hops: 0,
    });
    world.msg_send_in(node, caller, m)
}

/// Future counterpart of [`inject_call`].
pub fn inject_future(
    world: &mut World,
    node: NodeId,
    from: ObjectId,
    dest: ObjectId,
    future: FutureId,
    value: Value,
) -> Result<(), EngineError> {
    let m = Message::Future(FutureMsg {
        dest,
        future,
        value,
        hops: 0,
    });
    world.msg_send_in(node, from, m)
}
