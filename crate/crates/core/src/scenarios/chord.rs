//! Chord ring members and their clients.
//!
//! Setup-time lookups (`FindSuccessor`) are recursive and wait on futures;
//! setup runs one join at a time, so no wait cycle can form. Steady-state
//! traffic uses `Route` instead, which forwards the request without waiting
//! and lets the key's owner answer the client directly.

use std::collections::BTreeMap;

use crate::actors::{Flow, StepCtx, Task, Value};
use crate::routing::ObjectId;

use super::Method;

pub const OP_PUT: i64 = 0;
pub const OP_GET: i64 = 1;

/// A peer reference: object id and its position on the identifier circle.
pub type Peer = (ObjectId, u32);

/// `x` in the circular interval `(a, b]`; the whole circle when `a == b`.
pub fn in_half_open(x: u32, a: u32, b: u32) -> bool {
    if a < b {
        a < x && x <= b
    } else {
        x > a || x <= b
    }
}

/// `x` in the circular interval `(a, b)`; everything but `a` when `a == b`.
pub fn in_open(x: u32, a: u32, b: u32) -> bool {
    if a < b {
        a < x && x < b
    } else {
        x > a || x < b
    }
}

/// Value producers store under `key`, so any reader can check it.
pub fn value_for(key: u32) -> i64 {
    key as i64 * 7919 + 1
}

/// Highest finger strictly between `me` and `key`, falling back to the successor.
pub fn closest_preceding(me: u32, fingers: &[Option<Peer>], succ: Peer, key: u32) -> Peer {
    fingers
        .iter()
        .rev()
        .flatten()
        .find(|f| in_open(f.1, me, key))
        .copied()
        .unwrap_or(succ)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordNode {
    pub key: u32,
    pub bits: u32,
    pub succ: Option<Peer>,
    pub pred: Option<Peer>,
    /// `fingers[i]` is the successor of `key + 2^i`.
    pub fingers: Vec<Option<Peer>>,
    pub store: BTreeMap<u32, i64>,
    pub work: u32,
    pub served: u64,
}

fn peer_value(p: Peer) -> Value {
    Value::Tuple(vec![Value::Obj(p.0), Value::Int(p.1 as i64)])
}

fn value_peer(v: &Value) -> Peer {
    match v {
        Value::Tuple(items) => (
            items[0].as_obj().expect("peer object"),
            items[1].as_int().expect("peer key") as u32,
        ),
        other => panic!("expected a peer, got {other:?}"),
    }
}

impl ChordNode {
    pub fn new(key: u32, bits: u32, work: u32) -> Self {
        ChordNode {
            key,
            bits,
            succ: None,
            pred: None,
            fingers: vec![None; bits as usize],
            store: BTreeMap::new(),
            work,
            served: 0,
        }
    }

    fn modulus(&self) -> u64 {
        1u64 << self.bits
    }

    fn finger_start(&self, i: u32) -> u32 {
        ((self.key as u64 + (1u64 << i)) % self.modulus()) as u32
    }

    /// Whether this node is responsible for `k`.
    pub fn owns(&self, k: u32) -> bool {
        match self.pred {
            Some((_, p)) => in_half_open(k, p, self.key),
            None => true,
        }
    }

    /// Distinct objects this node references.
    pub fn peers(&self) -> Vec<ObjectId> {
        let mut out: Vec<ObjectId> = self
            .succ
            .iter()
            .chain(self.pred.iter())
            .chain(self.fingers.iter().flatten())
            .map(|p| p.0)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn next_hop(&self, me: Peer, k: u32) -> Peer {
        let succ = self.succ.unwrap_or(me);
        if in_half_open(k, self.key, succ.1) {
            succ
        } else {
            closest_preceding(self.key, &self.fingers, succ, k)
        }
    }

    pub(super) fn step(&mut self, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        let me = (ctx.me(), self.key);
        match task.method {
            Method::Join => self.join(me, task, ctx),
            Method::FindSuccessor => {
                if task.pc == 0 {
                    let k = task.int_arg(0) as u32;
                    let succ = self.succ.unwrap_or(me);
                    if in_half_open(k, self.key, succ.1) {
                        return Flow::Return(peer_value(succ));
                    }
                    let n = closest_preceding(self.key, &self.fingers, succ, k);
                    let f = ctx.call(n.0, Method::FindSuccessor, vec![Value::Int(k as i64)]);
                    task.locals = vec![Value::Fut(f)];
                    task.pc = 1;
                    return Flow::Continue;
                }
                let f = task.locals[0].as_fut().unwrap();
                match ctx.get(f) {
                    Some(v) => Flow::Return(v),
                    None => Flow::Block(f),
                }
            }
            Method::SetPredecessor => {
                let old = self.pred.unwrap_or(me);
                self.pred = Some((task.obj_arg(0), task.int_arg(1) as u32));
                Flow::Return(peer_value(old))
            }
            Method::SetSuccessor => {
                let s = (task.obj_arg(0), task.int_arg(1) as u32);
                self.succ = Some(s);
                self.fingers[0] = Some(s);
                Flow::Return(Value::Unit)
            }
            Method::FixFingers => self.fix_fingers(me, task, ctx),
            Method::Route => self.route(me, task, ctx),
            _ => Flow::Return(Value::Unit),
        }
    }

    fn join(&mut self, me: Peer, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        // pc: 0 lookup, 1 await successor, 2 notify successor, 3 await old
        // predecessor, 4 link predecessor, 5 await ack
        let awaited = |task: &Task, ctx: &mut StepCtx<'_>| {
            let f = task.locals[0].as_fut().unwrap();
            ctx.get(f).ok_or(f)
        };
        match task.pc {
            0 => {
                let bootstrap = task.obj_arg(0);
                if bootstrap == me.0 {
                    self.succ = Some(me);
                    self.pred = Some(me);
                    self.fingers[0] = Some(me);
                    return Flow::Return(Value::Unit);
                }
                let f = ctx.call(
                    bootstrap,
                    Method::FindSuccessor,
                    vec![Value::Int(self.key as i64)],
                );
                task.locals = vec![Value::Fut(f)];
            }
            1 => match awaited(task, ctx) {
                Ok(v) => {
                    let s = value_peer(&v);
                    self.succ = Some(s);
                    self.fingers[0] = Some(s);
                }
                Err(f) => return Flow::Block(f),
            },
            2 => {
                let s = self.succ.unwrap();
                let f = ctx.call(
                    s.0,
                    Method::SetPredecessor,
                    vec![Value::Obj(me.0), Value::Int(me.1 as i64)],
                );
                task.locals = vec![Value::Fut(f)];
            }
            3 => match awaited(task, ctx) {
                Ok(v) => self.pred = Some(value_peer(&v)),
                Err(f) => return Flow::Block(f),
            },
            4 => {
                let p = self.pred.unwrap();
                let f = ctx.call(
                    p.0,
                    Method::SetSuccessor,
                    vec![Value::Obj(me.0), Value::Int(me.1 as i64)],
                );
                task.locals = vec![Value::Fut(f)];
            }
            _ => {
                return match awaited(task, ctx) {
                    Ok(_) => Flow::Return(Value::Unit),
                    Err(f) => Flow::Block(f),
                }
            }
        }
        task.pc += 1;
        Flow::Continue
    }

    fn fix_fingers(&mut self, me: Peer, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        // locals: [finger index, pending lookup]
        if task.locals.is_empty() {
            task.locals = vec![Value::Int(0), Value::Unit];
        }
        let i = task.locals[0].as_int().unwrap() as u32;
        if i >= self.bits {
            return Flow::Return(Value::Unit);
        }
        if let Some(f) = task.locals[1].as_fut() {
            return match ctx.get(f) {
                Some(v) => {
                    self.fingers[i as usize] = Some(value_peer(&v));
                    task.locals = vec![Value::Int(i as i64 + 1), Value::Unit];
                    Flow::Continue
                }
                None => Flow::Block(f),
            };
        }
        let start = self.finger_start(i);
        let succ = self.succ.unwrap_or(me);
        if in_half_open(start, self.key, succ.1) {
            self.fingers[i as usize] = Some(succ);
            task.locals[0] = Value::Int(i as i64 + 1);
        } else {
            let n = closest_preceding(self.key, &self.fingers, succ, start);
            let f = ctx.call(n.0, Method::FindSuccessor, vec![Value::Int(start as i64)]);
            task.locals[1] = Value::Fut(f);
        }
        Flow::Continue
    }

    /// Args: key, op, value, client, forwards so far.
    fn route(&mut self, me: Peer, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        if task.pc < self.work {
            task.pc += 1;
            return Flow::Continue;
        }
        let k = task.int_arg(0) as u32;
        let op = task.int_arg(1);
        let client = task.obj_arg(3);
        let forwards = task.int_arg(4);
        if self.owns(k) {
            let result = if op == OP_PUT {
                self.store.insert(k, task.int_arg(2));
                Value::Unit
            } else {
                self.store.get(&k).map_or(Value::Unit, |&v| Value::Int(v))
            };
            self.served += 1;
            ctx.call_detached(
                client,
                Method::Reply,
                vec![Value::Int(k as i64), Value::Int(op), result, Value::Int(forwards)],
            );
        } else {
            let n = self.next_hop(me, k);
            let mut args = task.args.clone();
            args[4] = Value::Int(forwards + 1);
            ctx.call_detached(n.0, Method::Route, args);
        }
        Flow::Return(Value::Unit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientMode {
    /// Puts `value_for(k)` under pseudo-random keys.
    Producer,
    /// Gets pseudo-random keys.
    Consumer,
    /// Puts every key in order, then gets every key in order.
    Probe { next: u32, getting: bool, done: bool },
}

impl ClientMode {
    pub fn probe() -> Self {
        ClientMode::Probe {
            next: 0,
            getting: false,
            done: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordClient {
    pub entry: Option<ObjectId>,
    pub mode: ClientMode,
    pub bits: u32,
    /// Local steps before each request.
    pub think: u32,
    rng: u64,
    pub completed: u64,
    pub hits: u64,
    pub misses: u64,
    /// Replies whose value disagreed with what was stored.
    pub mismatches: u64,
    pub max_forwards: u32,
}

impl ChordClient {
    pub fn new(mode: ClientMode, bits: u32, seed: u64) -> Self {
        ChordClient {
            entry: None,
            mode,
            bits,
            think: 0,
            rng: seed | 1,
            completed: 0,
            hits: 0,
            misses: 0,
            mismatches: 0,
            max_forwards: 0,
        }
    }

    pub fn with_think(mut self, think: u32) -> Self {
        self.think = think;
        self
    }

    fn next_key(&mut self) -> u32 {
        // xorshift64*
        self.rng ^= self.rng >> 12;
        self.rng ^= self.rng << 25;
        self.rng ^= self.rng >> 27;
        let r = self.rng.wrapping_mul(0x2545_F491_4F6C_DD1D);
        ((r >> 32) % (1u64 << self.bits)) as u32
    }

    /// Next request, or `None` once a probe has finished.
    fn next_request(&mut self) -> Option<(u32, i64)> {
        let space = 1u32 << self.bits;
        match &mut self.mode {
            ClientMode::Producer => Some((self.next_key(), OP_PUT)),
            ClientMode::Consumer => Some((self.next_key(), OP_GET)),
            ClientMode::Probe {
                next,
                getting,
                done,
            } => {
                if *done {
                    return None;
                }
                if *next == space {
                    if *getting {
                        *done = true;
                        return None;
                    }
                    *getting = true;
                    *next = 0;
                }
                let k = *next;
                *next += 1;
                Some((k, if *getting { OP_GET } else { OP_PUT }))
            }
        }
    }

    fn issue(&mut self, ctx: &mut StepCtx<'_>) {
        let Some(entry) = self.entry else { return };
        if let Some((k, op)) = self.next_request() {
            let value = if op == OP_PUT { value_for(k) } else { 0 };
            let me = ctx.me();
            ctx.call_detached(
                entry,
                Method::Route,
                vec![
                    Value::Int(k as i64),
                    Value::Int(op),
                    Value::Int(value),
                    Value::Obj(me),
                    Value::Int(0),
                ],
            );
        }
    }

    pub fn probe_done(&self) -> bool {
        matches!(self.mode, ClientMode::Probe { done: true, .. })
    }

    pub(super) fn step(&mut self, task: &mut Task, ctx: &mut StepCtx<'_>) -> Flow {
        if task.pc > 0 {
            if task.pc < self.think {
                task.pc += 1;
                return Flow::Continue;
            }
            self.issue(ctx);
            return Flow::Return(Value::Unit);
        }
        match task.method {
            Method::Start => {
                self.entry = Some(task.obj_arg(0));
            }
            Method::Reply => {
                let k = task.int_arg(0) as u32;
                let op = task.int_arg(1);
                let forwards = task.int_arg(3) as u32;
                self.completed += 1;
                self.max_forwards = self.max_forwards.max(forwards);
                if op == OP_GET {
                    match task.arg(2) {
                        Value::Int(v) => {
                            self.hits += 1;
                            if *v != value_for(k) {
                                self.mismatches += 1;
                            }
                        }
                        _ => {
                            self.misses += 1;
                            // a probe reads only keys it has already written
                            if matches!(self.mode, ClientMode::Probe { .. }) {
                                self.mismatches += 1;
                            }
                        }
                    }
                }
            }
            _ => return Flow::Return(Value::Unit),
        }
        if self.think == 0 {
            self.issue(ctx);
            return Flow::Return(Value::Unit);
        }
        task.pc = 1;
        Flow::Continue
    }
}
