//! Benchmark programs, written directly as object behaviours.
//!
//! Every scenario starts from a single [`Coordinator`] object on the startup
//! node. The coordinator runs a setup script that creates the whole object
//! population, wires it up, and finally calls `setupFinished` on itself,
//! which opens the setup gate. After the gate the population is fixed.

mod chord;
mod setup;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use chord::{
    closest_preceding, in_half_open, in_open, value_for, ChordClient, ChordNode, ClientMode, Peer,
    OP_GET, OP_PUT,
};
pub use setup::{chord_ids, Arg, Coordinator, SetupOp};

use crate::actors::{Flow, RuntimeObject, StepCtx, Task, Value};
use crate::metrics::CommGraph;
use crate::routing::ObjectId;

/// Method names understood by scenario behaviours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Bootstrap task of the startup object.
    Main,
    SetupFinished,
    Run,
    Ping,
    Init,
    Pass,
    Join,
    FindSuccessor,
    SetPredecessor,
    SetSuccessor,
    FixFingers,
    Route,
    Start,
    Reply,
}

/// Object behaviour: the object's fields plus the code its tasks run.
#[derive(Debug, Clone, PartialEq)]
pub enum Behavior {
    Coordinator(Coordinator),
    /// Runs one perpetual compute loop.
    Worker,
    /// Star center: answers pings after `work` local steps.
    Center { work: u32 },
    /// Star fringe: forever pings its center, waits for the answer, then
    /// computes for `work` steps.
    Fringe { center: Option<ObjectId>, work: u32 },
    Ring(RingNode),
    Chord(Box<ChordNode>),
    Client(ChordClient),
}

/// Ring member. A token is a chain of `Pass` calls, each member forwarding
/// it to its successor after `work` local steps. Forwarding does not wait
/// for the successor's answer, so any number of tokens can circulate
/// without a cycle of waiting members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingNode {
    pub next: Option<ObjectId>,
    pub work: u32,
    pub passes: u64,
}

/// Sentinel for a token that never stops circulating.
pub const ENDLESS: i64 = -1;

impl Behavior {
    /// Executes one statement of `task`.
    pub fn step(&mut self, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        if task.method == Method::SetupFinished {
            return Flow::Return(Value::Unit);
        }
        match self {
            Behavior::Coordinator(c) => c.step(task, ctx),
            Behavior::Worker => {
                task.pc = task.pc.wrapping_add(1);
                Flow::Continue
            }
            Behavior::Center { work } => {
                if task.pc < *work {
                    task.pc += 1;
                    Flow::Continue
                } else {
                    Flow::Return(Value::Unit)
                }
            }
            Behavior::Fringe { center, work } => fringe_step(center, *work, task, ctx),
            Behavior::Ring(node) => node.step(task, ctx),
            Behavior::Chord(node) => node.step(task, ctx),
            Behavior::Client(client) => client.step(task, ctx),
        }
    }
}

fn fringe_step(
    center: &mut Option<ObjectId>,
    work: u32,
    task: &mut Task,
    ctx: &mut StepCtx<'_>,
) -> Flow {
    if task.pc >= 2 + work {
        task.pc = 0;
    }
    match task.pc {
        0 => {
            if center.is_none() {
                *center = task.args.first().and_then(Value::as_obj);
            }
            let Some(c) = *center else {
                return Flow::Return(Value::Unit);
            };
            let f = ctx.call(c, Method::Ping, vec![]);
            task.locals = vec![Value::Fut(f)];
            task.pc = 1;
            Flow::Continue
        }
        1 => {
            let f = task.locals[0].as_fut().expect("pending ping");
            match ctx.get(f) {
                Some(_) => {
                    task.pc = 2;
                    Flow::Continue
                }
                None => Flow::Block(f),
            }
        }
        _ => {
            task.pc += 1;
            Flow::Continue
        }
    }
}

impl RingNode {
    pub fn new(work: u32) -> Self {
        RingNode {
            next: None,
            work,
            passes: 0,
        }
    }

    fn step(&mut self, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        match task.method {
            Method::Init => {
                self.next = task.args.first().and_then(Value::as_obj);
                Flow::Return(Value::Unit)
            }
            Method::Pass => {
                if task.pc < self.work {
                    task.pc += 1;
                    return Flow::Continue;
                }
                self.passes += 1;
                let remaining = task.int_arg(0);
                if remaining != 0 {
                    if let Some(next) = self.next {
                        let left = if remaining == ENDLESS { ENDLESS } else { remaining - 1 };
                        ctx.call_detached(next, Method::Pass, vec![Value::Int(left)]);
                    }
                }
                Flow::Return(Value::Unit)
            }
            _ => Flow::Return(Value::Unit),
        }
    }
}

/// Benchmark program selection with its sizing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Workers with perpetual tasks and no communication.
    IndependentTasks { workers: usize },
    /// Independent stars of one center and `fringes` fringe objects each.
    Star {
        stars: usize,
        fringes: usize,
        fringe_work: u32,
        center_work: u32,
    },
    /// Ring of `objects` members with `tokens` circulating call chains.
    /// `laps` bounds how many times each token goes round; `None` is forever.
    Ring {
        objects: usize,
        tokens: usize,
        laps: Option<u32>,
        work: u32,
    },
    /// Chord DHT with attached producer and consumer clients. DHT members
    /// spend `work` steps per request; clients spend `think` steps between
    /// requests.
    Chord {
        objects: usize,
        bits: u32,
        clients: usize,
        work: u32,
        think: u32,
    },
    /// Chord DHT with a single client that puts every key, then gets every
    /// key back and checks the values.
    ChordProbe { objects: usize, bits: u32 },
}

pub fn independent_tasks(workers: usize) -> Scenario {
    Scenario::IndependentTasks { workers }
}

pub fn star(stars: usize, fringes: usize) -> Scenario {
    Scenario::Star {
        stars,
        fringes,
        fringe_work: 2,
        center_work: 1,
    }
}

pub fn ring(objects: usize) -> Scenario {
    Scenario::Ring {
        objects,
        tokens: objects,
        laps: None,
        work: 20,
    }
}

pub fn chord_dht(objects: usize, bits: u32) -> Scenario {
    Scenario::Chord {
        objects,
        bits,
        clients: objects,
        work: 20,
        think: 200,
    }
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::IndependentTasks { .. } => "independent_tasks",
            Scenario::Star { .. } => "star",
            Scenario::Ring { .. } => "ring",
            Scenario::Chord { .. } => "chord_dht",
            Scenario::ChordProbe { .. } => "chord_probe",
        }
    }

    /// Checks sizes before anything is built.
    pub fn check(&self) -> Result<(), String> {
        match *self {
            Scenario::IndependentTasks { .. } | Scenario::Star { .. } => Ok(()),
            Scenario::Ring { objects, tokens, .. } => {
                if objects < 2 {
                    Err(format!("ring needs at least 2 objects, got {objects}"))
                } else if tokens > objects {
                    Err(format!("ring has {tokens} tokens but only {objects} objects"))
                } else {
                    Ok(())
                }
            }
            Scenario::Chord { objects, bits, .. } | Scenario::ChordProbe { objects, bits } => {
                if bits == 0 || bits > 24 {
                    Err(format!("keyspace of {bits} bits is out of range"))
                } else if objects == 0 || objects as u64 > 1u64 << bits {
                    Err(format!("{objects} chord objects do not fit a {bits}-bit keyspace"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Behaviour of the startup object, whose main task performs setup.
    pub fn coordinator(&self, seed: u64) -> Behavior {
        Behavior::Coordinator(Coordinator::new(setup::script(self, seed)))
    }

    /// Declared communication partners, read off the objects' fields.
    pub fn comm_graph<'a>(&self, objects: impl IntoIterator<Item = &'a RuntimeObject>) -> CommGraph {
        let mut partners: BTreeMap<ObjectId, BTreeSet<ObjectId>> = BTreeMap::new();
        let mut subjects = Vec::new();
        let mut link = |a: ObjectId, b: ObjectId| {
            if a != b {
                partners.entry(a).or_default().insert(b);
                partners.entry(b).or_default().insert(a);
            }
        };
        for obj in objects {
            match &obj.behavior {
                Behavior::Center { .. } => subjects.push(obj.id),
                Behavior::Fringe { center: Some(c), .. } => link(obj.id, *c),
                Behavior::Ring(node) => {
                    subjects.push(obj.id);
                    if let Some(n) = node.next {
                        link(obj.id, n);
                    }
                }
                Behavior::Chord(node) => {
                    subjects.push(obj.id);
                    for peer in node.peers() {
                        link(obj.id, peer);
                    }
                }
                Behavior::Client(client) => {
                    if let Some(e) = client.entry {
                        link(obj.id, e);
                    }
                }
                _ => {}
            }
        }
        subjects.sort();
        CommGraph {
            partners: partners
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            subjects,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::{CallMsg, FutureId, IdMint};
    use crate::netgraph::{Message, NodeId};

    fn oid(s: u32) -> ObjectId {
        ObjectId::new(NodeId(0), s)
    }

    fn step(o: &mut RuntimeObject) -> crate::actors::StepReport {
        let mut mint = IdMint::new(NodeId(0));
        o.step(NodeId(0), &mut mint, true).unwrap()
    }

    fn pass_call(dest: ObjectId, remaining: i64) -> Message {
        Message::Call(CallMsg {
            dest,
            caller: oid(99),
            method: Method::Pass,
            args: vec![Value::Int(remaining)],
            future: FutureId { caller: oid(99), seq: remaining as u32 },
            hops: 0,
        })
    }

    #[test]
    fn worker_never_finishes() {
        let mut w = RuntimeObject::new(oid(0), Behavior::Worker, 4);
        w.deliver(Message::Call(CallMsg {
            dest: oid(0),
            caller: oid(1),
            method: Method::Run,
            args: vec![],
            future: FutureId { caller: oid(1), seq: 0 },
            hops: 0,
        }))
        .unwrap();
        for _ in 0..100 {
            assert!(step(&mut w).stepped);
            assert!(w.output_queue.is_empty());
        }
        assert!(w.is_active());
    }

    #[test]
    fn ring_node_forwards_token_and_stops_at_zero() {
        let mut r = RuntimeObject::new(oid(0), Behavior::Ring(RingNode::new(1)), 4);
        r.deliver(Message::Call(CallMsg {
            dest: oid(0),
            caller: oid(9),
            method: Method::Init,
            args: vec![Value::Obj(oid(1))],
            future: FutureId { caller: oid(9), seq: 7 },
            hops: 0,
        }))
        .unwrap();
        step(&mut r);
        r.output_queue.clear();
        r.deliver(pass_call(oid(0), 1)).unwrap();
        // one work step, then forward and answer
        step(&mut r);
        assert!(r.output_queue.is_empty());
        step(&mut r);
        let kinds: Vec<_> = r.output_queue.iter().map(|m| m.kind()).collect();
        assert_eq!(kinds, vec!["Call", "Future"]);
        match &r.output_queue[0] {
            Message::Call(c) => {
                assert_eq!(c.dest, oid(1));
                assert_eq!(c.args, vec![Value::Int(0)]);
            }
            _ => unreachable!(),
        }
        r.output_queue.clear();
        // a token with nothing left stops here
        r.deliver(pass_call(oid(0), 0)).unwrap();
        step(&mut r);
        step(&mut r);
        let kinds: Vec<_> = r.output_queue.iter().map(|m| m.kind()).collect();
        assert_eq!(kinds, vec!["Future"]);
        assert!(!r.is_active());
    }

    #[test]
    fn scenario_checks() {
        assert!(ring(1).check().is_err());
        assert!(ring(2).check().is_ok());
        assert!(chord_dht(129, 7).check().is_err());
        assert!(chord_dht(128, 7).check().is_ok());
    }
}
