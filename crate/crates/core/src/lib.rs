//! Deterministic simulator of a decentralized object runtime.
//!
//! Objects run on the nodes of a static network and address each other by
//! object identifier only. Node controllers route Calls and Futures with
//! distance-vector tables kept fresh by gossip, and periodically migrate
//! objects to neighbours according to a load-balancing procedure.
//!
//! The layers, bottom up:
//!
//! - [`netgraph`]: topology, FIFO arcs and the wire messages;
//! - [`routing`]: per-node routing tables;
//! - [`actors`]: runtime objects, tasks and futures;
//! - [`scenarios`]: the benchmark programs;
//! - [`balancer`]: load gossip and migration procedures;
//! - [`engine`]: the round-robin rule scheduler;
//! - [`metrics`]: sampling, aggregation and CSV output;
//! - [`cli`]: configuration, runs and sweeps.

pub mod actors;
pub mod balancer;
pub mod cli;
pub mod engine;
pub mod metrics;
pub mod netgraph;
pub mod routing;
pub mod scenarios;

pub use balancer::{ProcedureKind, ProcedureParams};
pub use cli::RunConfig;
pub use engine::{EngineConfig, EngineError, World};
pub use netgraph::{Message, NetworkGraph, NodeId};
pub use routing::{ObjectId, RoutingTable};
pub use scenarios::Scenario;
