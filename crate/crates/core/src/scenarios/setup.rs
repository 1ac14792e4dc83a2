use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::chord::{ChordClient, ChordNode, ClientMode};
use super::{Behavior, Method, RingNode, Scenario, ENDLESS};
use crate::actors::{Flow, FutureId, StepCtx, Task, Value};
use crate::routing::ObjectId;

/// Argument of a scripted call: a literal, or the id of the n-th created object.
#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Val(Value),
    Obj(usize),
}

/// One statement of a setup script.
#[derive(Debug, Clone, PartialEq)]
pub enum SetupOp {
    Create(Behavior),
    /// Fire-and-forget call to the n-th created object.
    Call {
        target: usize,
        method: Method,
        args: Vec<Arg>,
    },
    /// Call and wait for the answer before continuing.
    CallAwait {
        target: usize,
        method: Method,
        args: Vec<Arg>,
    },
    /// Calls `setupFinished` on the coordinator itself.
    Finish,
}

/// Startup object: interprets a setup script one statement per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinator {
    script: Arc<[SetupOp]>,
    next_op: usize,
    awaiting: Option<FutureId>,
    pub created: Vec<ObjectId>,
}

impl Coordinator {
    pub fn new(script: Vec<SetupOp>) -> Self {
        Coordinator {
            script: script.into(),
            next_op: 0,
            awaiting: None,
            created: Vec::new(),
        }
    }

    pub fn script_len(&self) -> usize {
        self.script.len()
    }

    pub fn done(&self) -> bool {
        self.next_op >= self.script.len()
    }

    pub(super) fn step(&mut self, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        if task.method != Method::Main {
            return Flow::Return(Value::Unit);
        }
        if let Some(f) = self.awaiting {
            if ctx.get(f).is_none() {
                return Flow::Block(f);
            }
            self.awaiting = None;
            self.next_op += 1;
            return Flow::Continue;
        }
        let script = Arc::clone(&self.script);
        let Some(op) = script.get(self.next_op) else {
            return Flow::Return(Value::Unit);
        };
        match op {
            SetupOp::Create(b) => {
                let id = ctx.create(b.clone());
                self.created.push(id);
                self.next_op += 1;
            }
            SetupOp::Call {
                target,
                method,
                args,
            } => {
                let args = self.resolve(args);
                ctx.call_detached(self.created[*target], *method, args);
                self.next_op += 1;
            }
            SetupOp::CallAwait {
                target,
                method,
                args,
            } => {
                let args = self.resolve(args);
                self.awaiting = Some(ctx.call(self.created[*target], *method, args));
            }
            SetupOp::Finish => {
                let me = ctx.me();
                ctx.call_detached(me, Method::SetupFinished, vec![]);
                self.next_op += 1;
            }
        }
        Flow::Continue
    }

    fn resolve(&self, args: &[Arg]) -> Vec<Value> {
        args.iter()
            .map(|a| match a {
                Arg::Val(v) => v.clone(),
                Arg::Obj(i) => Value::Obj(self.created[*i]),
            })
            .collect()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Distinct identifiers on the `bits`-bit circle, in join order.
pub fn chord_ids(objects: usize, bits: u32, seed: u64) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..1u32 << bits).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0xC0DE));
    ids.shuffle(&mut rng);
    ids.truncate(objects);
    ids
}

pub(super) fn script(scenario: &Scenario, seed: u64) -> Vec<SetupOp> {
    let mut ops = Vec::new();
    match *scenario {
        Scenario::IndependentTasks { workers } => {
            ops.extend((0..workers).map(|_| SetupOp::Create(Behavior::Worker)));
            ops.extend((0..workers).map(|i| SetupOp::Call {
                target: i,
                method: Method::Run,
                args: vec![],
            }));
        }
        Scenario::Star {
            stars,
            fringes,
            fringe_work,
            center_work,
        } => {
            let mut runs = Vec::new();
            for _ in 0..stars {
                let center = ops.len();
                ops.push(SetupOp::Create(Behavior::Center { work: center_work }));
                for _ in 0..fringes {
                    runs.push(SetupOp::Call {
                        target: ops.len(),
                        method: Method::Run,
                        args: vec![Arg::Obj(center)],
                    });
                    ops.push(SetupOp::Create(Behavior::Fringe {
                        center: None,
                        work: fringe_work,
                    }));
                }
            }
            ops.extend(runs);
        }
        Scenario::Ring {
            objects,
            tokens,
            laps,
            work,
        } => {
            ops.extend((0..objects).map(|_| SetupOp::Create(Behavior::Ring(RingNode::new(work)))));
            ops.extend((0..objects).map(|i| SetupOp::Call {
                target: i,
                method: Method::Init,
                args: vec![Arg::Obj((i + 1) % objects)],
            }));
            let remaining = laps.map_or(ENDLESS, |l| l as i64 * objects as i64);
            ops.extend((0..tokens).map(|t| SetupOp::Call {
                target: t * objects / tokens.max(1),
                method: Method::Pass,
                args: vec![Arg::Val(Value::Int(remaining))],
            }));
        }
        Scenario::Chord {
            objects,
            bits,
            clients,
            work,
            think,
        } => {
            chord_ring(&mut ops, objects, bits, work, seed);
            for j in 0..clients {
                let mode = if j % 2 == 0 {
                    ClientMode::Producer
                } else {
                    ClientMode::Consumer
                };
                ops.push(SetupOp::Create(Behavior::Client(
                    ChordClient::new(mode, bits, splitmix(seed ^ (j as u64).wrapping_mul(0x1000_0001)))
                        .with_think(think),
                )));
            }
            for j in 0..clients {
                ops.push(SetupOp::Call {
                    target: objects + j,
                    method: Method::Start,
                    args: vec![Arg::Obj(j % objects)],
                });
            }
        }
        Scenario::ChordProbe { objects, bits } => {
            chord_ring(&mut ops, objects, bits, 0, seed);
            ops.push(SetupOp::Create(Behavior::Client(ChordClient::new(
                ClientMode::probe(),
                bits,
                0,
            ))));
            ops.push(SetupOp::Call {
                target: objects,
                method: Method::Start,
                args: vec![Arg::Obj(0)],
            });
        }
    }
    ops.push(SetupOp::Finish);
    ops
}

/// Creates the DHT members, joins them one at a time through the first one,
/// then has each member build its finger table.
fn chord_ring(ops: &mut Vec<SetupOp>, objects: usize, bits: u32, work: u32, seed: u64) {
    let ids = chord_ids(objects, bits, seed);
    let base = ops.len();
    for &id in &ids {
        ops.push(SetupOp::Create(Behavior::Chord(Box::new(ChordNode::new(
            id, bits, work,
        )))));
    }
    for k in 0..objects {
        ops.push(SetupOp::CallAwait {
            target: base + k,
            method: Method::Join,
            args: vec![Arg::Obj(base), Arg::Val(Value::Int(ids[0] as i64))],
        });
    }
    for k in 0..objects {
        ops.push(SetupOp::CallAwait {
            target: base + k,
            method: Method::FixFingers,
            args: vec![],
        });
    }
}
