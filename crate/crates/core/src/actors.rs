//! Interpreter layer: runtime objects with at most one active task,
//! asynchronous calls answered through futures, and a bounded
//! communication history per object.
//!
//! Object behaviour is a deterministic state machine (see
//! [`crate::scenarios::Behavior`]). Each call to [`RuntimeObject::step`]
//! executes one statement of the active task through a [`StepCtx`], which is
//! the only way a behaviour can touch the outside world.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{Message, NodeId};
use crate::routing::ObjectId;
use crate::scenarios::{Behavior, Method};

pub const DEFAULT_HISTORY_CAPACITY: usize = 32;

/// Future identifier: the calling object plus its private call counter.
/// Independent of where the caller happens to be located.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct FutureId {
    pub caller: ObjectId,
    pub seq: u32,
}

impl fmt::Display for FutureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.caller, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Obj(ObjectId),
    Fut(FutureId),
    Tuple(Vec<Value>),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_obj(&self) -> Option<ObjectId> {
        match self {
            Value::Obj(o) => Some(*o),
            _ => None,
        }
    }

    pub fn as_fut(&self) -> Option<FutureId> {
        match self {
            Value::Fut(f) => Some(*f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallMsg {
    pub dest: ObjectId,
    pub caller: ObjectId,
    pub method: Method,
    pub args: Vec<Value>,
    pub future: FutureId,
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FutureMsg {
    pub dest: ObjectId,
    pub future: FutureId,
    pub value: Value,
    pub hops: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Running,
    BlockedOn(FutureId),
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub method: Method,
    pub args: Vec<Value>,
    /// Who to answer and with which future; `None` for the bootstrap task.
    pub reply_to: Option<(ObjectId, FutureId)>,
    pub pc: u32,
    pub locals: Vec<Value>,
    pub status: TaskStatus,
}

impl Task {
    pub fn bootstrap(method: Method) -> Self {
        Task {
            method,
            args: Vec::new(),
            reply_to: None,
            pc: 0,
            locals: Vec::new(),
            status: TaskStatus::Running,
        }
    }

    fn from_call(call: CallMsg) -> Self {
        Task {
            method: call.method,
            args: call.args,
            reply_to: Some((call.caller, call.future)),
            pc: 0,
            locals: Vec::new(),
            status: TaskStatus::Running,
        }
    }

    pub fn arg(&self, i: usize) -> &Value {
        &self.args[i]
    }

    pub fn int_arg(&self, i: usize) -> i64 {
        self.args[i].as_int().expect("integer argument")
    }

    pub fn obj_arg(&self, i: usize) -> ObjectId {
        self.args[i].as_obj().expect("object argument")
    }
}

/// Outcome of one behaviour step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Block(FutureId),
    Return(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActorError {
    #[error("future {0} resolved twice")]
    DuplicateFuture(FutureId),
    #[error("object {0} created an object after setup finished")]
    LateCreation(ObjectId),
}

/// Resolved futures of one object. Futures the owner called with
/// `call_detached` are never read, so their values are dropped on arrival.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FutureStore {
    resolved: BTreeMap<FutureId, Value>,
    detached: BTreeSet<FutureId>,
}

impl FutureStore {
    pub fn resolve(&mut self, f: FutureId, v: Value) -> Result<(), ActorError> {
        if self.detached.remove(&f) {
            return Ok(());
        }
        if self.resolved.contains_key(&f) {
            return Err(ActorError::DuplicateFuture(f));
        }
        self.resolved.insert(f, v);
        Ok(())
    }

    pub fn is_resolved(&self, f: FutureId) -> bool {
        self.resolved.contains_key(&f)
    }

    /// Reads and consumes a resolved value.
    pub fn take(&mut self, f: FutureId) -> Option<Value> {
        self.resolved.remove(&f)
    }

    pub fn len(&self) -> usize {
        self.resolved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resolved.is_empty()
    }

    pub fn pending_detached(&self) -> usize {
        self.detached.len()
    }
}

/// Per-node object identifier source.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMint {
    node: NodeId,
    next: u32,
}

impl IdMint {
    pub fn new(node: NodeId) -> Self {
        IdMint { node, next: 0 }
    }

    pub fn fresh(&mut self) -> ObjectId {
        let id = ObjectId::new(self.node, self.next);
        self.next += 1;
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeObject {
    pub id: ObjectId,
    pub behavior: Behavior,
    pub task: Option<Task>,
    pub input_queue: VecDeque<CallMsg>,
    pub output_queue: VecDeque<Message>,
    pub futures: FutureStore,
    pub history: VecDeque<ObjectId>,
    pub history_capacity: usize,
    /// Object-local time: number of tasks run to completion.
    pub tasks_finished: u64,
    next_future: u32,
}

/// What happened during one [`RuntimeObject::step`].
#[derive(Debug, Default)]
pub struct StepReport {
    /// A behaviour statement was executed.
    pub stepped: bool,
    /// A task for `setupFinished` was activated.
    pub setup_finished: bool,
    /// Objects created by this step, not yet installed on the node.
    pub created: Vec<RuntimeObject>,
    /// Number of messages appended to the output queue by this step.
    pub emitted: usize,
    /// The step finished a task that owed a future.
    pub answered: Option<FutureId>,
}

/// Capabilities available to a behaviour while it executes one statement.
pub struct StepCtx<'a> {
    me: ObjectId,
    node: NodeId,
    output: &'a mut VecDeque<Message>,
    history: &'a mut VecDeque<ObjectId>,
    history_capacity: usize,
    futures: &'a mut FutureStore,
    next_future: &'a mut u32,
    mint: &'a mut IdMint,
    creation_allowed: bool,
    created: Vec<RuntimeObject>,
    error: Option<ActorError>,
}

impl<'a> StepCtx<'a> {
    pub fn me(&self) -> ObjectId {
        self.me
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    /// Asynchronous call. The returned future can be read with [`StepCtx::get`].
    pub fn call(&mut self, dest: ObjectId, method: Method, args: Vec<Value>) -> FutureId {
        let future = FutureId {
            caller: self.me,
            seq: *self.next_future,
        };
        *self.next_future += 1;
        self.output.push_back(Message::Call(CallMsg {
            dest,
            caller: self.me,
            method,
            args,
            future,
            hops: 0,
        }));
        record_history(self.history, self.history_capacity, dest);
        future
    }

    /// Asynchronous call whose result will never be read.
    pub fn call_detached(&mut self, dest: ObjectId, method: Method, args: Vec<Value>) -> FutureId {
        let f = self.call(dest, method, args);
        self.futures.detached.insert(f);
        f
    }

    /// Reads a resolved future; `None` means the task must block on it.
    pub fn get(&mut self, f: FutureId) -> Option<Value> {
        self.futures.take(f)
    }

    /// Creates a new object on the current node.
    pub fn create(&mut self, behavior: Behavior) -> ObjectId {
        let id = self.mint.fresh();
        if !self.creation_allowed && self.error.is_none() {
            self.error = Some(ActorError::LateCreation(self.me));
        }
        self.created
            .push(RuntimeObject::new(id, behavior, self.history_capacity));
        id
    }
}

/// Appends `other` to a bounded history, evicting the oldest entry.
pub fn record_history(history: &mut VecDeque<ObjectId>, capacity: usize, other: ObjectId) {
    if capacity == 0 {
        return;
    }
    history.push_back(other);
    while history.len() > capacity {
        history.pop_front();
    }
}

impl RuntimeObject {
    pub fn new(id: ObjectId, behavior: Behavior, history_capacity: usize) -> Self {
        RuntimeObject {
            id,
            behavior,
            task: None,
            input_queue: VecDeque::new(),
            output_queue: VecDeque::new(),
            futures: FutureStore::default(),
            history: VecDeque::new(),
            history_capacity,
            tasks_finished: 0,
            next_future: 0,
        }
    }

    /// Object with a bootstrap task already running.
    pub fn with_main(id: ObjectId, behavior: Behavior, history_capacity: usize) -> Self {
        let mut o = Self::new(id, behavior, history_capacity);
        o.task = Some(Task::bootstrap(Method::Main));
        o
    }

    /// An object is active while it has an unfinished task.
    pub fn is_active(&self) -> bool {
        self.task
            .as_ref()
            .is_some_and(|t| t.status != TaskStatus::Finished)
    }

    pub fn record_history(&mut self, other: ObjectId) {
        record_history(&mut self.history, self.history_capacity, other);
    }

    /// Hands an application-level message to this object.
    pub fn deliver(&mut self, m: Message) -> Result<(), ActorError> {
        match m {
            Message::Call(c) => {
                debug_assert_eq!(c.dest, self.id);
                self.input_queue.push_back(c);
                Ok(())
            }
            Message::Future(f) => {
                debug_assert_eq!(f.dest, self.id);
                self.futures.resolve(f.future, f.value)
            }
            other => panic!("deliver called with {} message", other.kind()),
        }
    }

    /// Whether [`RuntimeObject::step`] would execute a statement.
    pub fn can_step(&self) -> bool {
        match &self.task {
            None => !self.input_queue.is_empty(),
            Some(t) => match t.status {
                TaskStatus::Running => true,
                TaskStatus::BlockedOn(f) => self.futures.is_resolved(f),
                TaskStatus::Finished => false,
            },
        }
    }

    fn activate_next(&mut self, report: &mut StepReport) {
        if let Some(call) = self.input_queue.pop_front() {
            if call.method == Method::SetupFinished {
                report.setup_finished = true;
            }
            self.task = Some(Task::from_call(call));
        }
    }

    /// Executes one statement of the active task, activating the next queued
    /// call first if the object is idle.
    pub fn step(
        &mut self,
        node: NodeId,
        mint: &mut IdMint,
        creation_allowed: bool,
    ) -> Result<StepReport, ActorError> {
        let mut report = StepReport::default();
        if self.task.is_none() {
            self.activate_next(&mut report);
        }
        let Some(task) = self.task.as_mut() else {
            return Ok(report);
        };
        if let TaskStatus::BlockedOn(f) = task.status {
            if !self.futures.is_resolved(f) {
                return Ok(report);
            }
            task.status = TaskStatus::Running;
        }

        let before = self.output_queue.len();
        let mut ctx = StepCtx {
            me: self.id,
            node,
            output: &mut self.output_queue,
            history: &mut self.history,
            history_capacity: self.history_capacity,
            futures: &mut self.futures,
            next_future: &mut self.next_future,
            mint,
            creation_allowed,
            created: Vec::new(),
            error: None,
        };
        let flow = self.behavior.step(task, &mut ctx);
        report.stepped = true;
        report.created = std::mem::take(&mut ctx.created);
        if let Some(e) = ctx.error.take() {
            return Err(e);
        }

        match flow {
            Flow::Continue => {}
            Flow::Block(f) => task.status = TaskStatus::BlockedOn(f),
            Flow::Return(value) => {
                task.status = TaskStatus::Finished;
                if let Some((caller, future)) = task.reply_to {
                    self.output_queue.push_back(Message::Future(FutureMsg {
                        dest: caller,
                        future,
                        value,
                        hops: 0,
                    }));
                    self.record_history(caller);
                    report.answered = Some(future);
                }
                self.tasks_finished += 1;
                self.task = None;
                self.activate_next(&mut report);
            }
        }
        report.emitted = self.output_queue.len() - before;
        Ok(report)
    }
}
