//! Static network topology: nodes, directed arcs with FIFO message queues,
//! topology builders and well-formedness validation.
//!
//! A [`NetworkGraph`] only describes the shape of the network and is
//! immutable once built, so one graph can be shared by any number of
//! concurrently running worlds. The mutable part, the message queues, lives
//! in [`ArcQueue`]s owned by each world and indexed by [`ArcIdx`].

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::{CallMsg, FutureMsg, RuntimeObject};
use crate::routing::{ObjectId, RoutingTable};

/// Dense node identifier assigned by the topology builder.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Position of an arc in [`NetworkGraph::arcs`].
pub type ArcIdx = usize;

/// Everything that can travel over an arc.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Routing table snapshot gossiped to a neighbour.
    Table(Arc<RoutingTable>),
    /// A complete runtime object in transit.
    Object(Box<RuntimeObject>),
    /// Method invocation.
    Call(CallMsg),
    /// Resolved value of a future.
    Future(FutureMsg),
    /// Load report from a neighbour.
    Load { origin: NodeId, load: u32 },
}

impl Message {
    /// Destination object, defined only for application-level messages.
    pub fn dest(&self) -> Option<ObjectId> {
        match self {
            Message::Call(c) => Some(c.dest),
            Message::Future(f) => Some(f.dest),
            _ => None,
        }
    }

    pub fn is_application(&self) -> bool {
        matches!(self, Message::Call(_) | Message::Future(_))
    }

    /// Arc traversals (self-loops excluded) of an application-level message.
    pub fn hops(&self) -> Option<u32> {
        match self {
            Message::Call(c) => Some(c.hops),
            Message::Future(f) => Some(f.hops),
            _ => None,
        }
    }

    pub(crate) fn add_hop(&mut self) {
        match self {
            Message::Call(c) => c.hops += 1,
            Message::Future(f) => f.hops += 1,
            _ => {}
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Table(_) => "Table",
            Message::Object(_) => "Object",
            Message::Call(_) => "Call",
            Message::Future(_) => "Future",
            Message::Load { .. } => "Load",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueueError {
    #[error("dequeue from empty queue on arc {src}->{dst}")]
    EmptyQueue { src: NodeId, dst: NodeId },
}

/// Unbounded FIFO queue attached to the arc `src -> dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcQueue<M = Message> {
    pub src: NodeId,
    pub dst: NodeId,
    queue: VecDeque<M>,
}

impl<M> ArcQueue<M> {
    pub fn new(src: NodeId, dst: NodeId) -> Self {
        ArcQueue {
            src,
            dst,
            queue: VecDeque::new(),
        }
    }

    pub fn enqueue(&mut self, m: M) {
        self.queue.push_back(m);
    }

    pub fn first(&self) -> Option<&M> {
        self.queue.front()
    }

    pub fn dequeue_first(&mut self) -> Result<M, QueueError> {
        self.queue.pop_front().ok_or(QueueError::EmptyQueue {
            src: self.src,
            dst: self.dst,
        })
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &M> {
        self.queue.iter()
    }

    pub fn is_self_loop(&self) -> bool {
        self.src == self.dst
    }
}

/// A violated well-formedness assumption.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("dangling arc {src}->{dst} references a non-existent node")]
    DanglingArc { src: NodeId, dst: NodeId },
    #[error("missing reverse arc for {src}->{dst}")]
    MissingReverseArc { src: NodeId, dst: NodeId },
    #[error("missing self-loop at node {node}")]
    MissingSelfLoop { node: NodeId },
}

/// Static directed graph. Arcs are kept in canonical `(src, dst)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkGraph {
    node_count: usize,
    arcs: Vec<(NodeId, NodeId)>,
    index: HashMap<(NodeId, NodeId), ArcIdx>,
    /// Incoming arcs of each node, ordered by source.
    incoming: Vec<Vec<ArcIdx>>,
    /// Outgoing arcs of each node, ordered by destination.
    outgoing: Vec<Vec<ArcIdx>>,
    neighbours: Vec<Vec<NodeId>>,
}

impl NetworkGraph {
    /// Builds a graph from an explicit arc list without validating it.
    /// Duplicate arcs are collapsed.
    pub fn from_arcs(node_count: usize, arcs: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut arcs: Vec<(NodeId, NodeId)> = arcs.into_iter().collect();
        arcs.sort();
        arcs.dedup();
        let mut index = HashMap::with_capacity(arcs.len());
        let mut incoming = vec![Vec::new(); node_count];
        let mut outgoing = vec![Vec::new(); node_count];
        let mut neighbours = vec![Vec::new(); node_count];
        for (i, &(s, d)) in arcs.iter().enumerate() {
            index.insert((s, d), i);
            if s.index() < node_count && d.index() < node_count {
                outgoing[s.index()].push(i);
                incoming[d.index()].push(i);
                if s != d {
                    neighbours[s.index()].push(d);
                }
            }
        }
        // outgoing is already ordered by dst because arcs are sorted by (src, dst)
        for inc in &mut incoming {
            inc.sort_by_key(|&i| arcs[i].0);
        }
        NetworkGraph {
            node_count,
            arcs,
            index,
            incoming,
            outgoing,
            neighbours,
        }
    }

    fn from_undirected(node_count: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut arcs: Vec<(NodeId, NodeId)> =
            (0..node_count as u32).map(|n| (NodeId(n), NodeId(n))).collect();
        for (a, b) in edges {
            arcs.push((NodeId(a), NodeId(b)));
            arcs.push((NodeId(b), NodeId(a)));
        }
        Self::from_arcs(node_count, arcs)
    }

    /// `rows x cols` grid with 4-neighbour, non-wrapping adjacency.
    /// Nodes are numbered row-major.
    pub fn grid(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid needs at least one row and column");
        let id = |r: usize, c: usize| (r * cols + c) as u32;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Self::from_undirected(rows * cols, edges)
    }

    /// Binary hypercube of dimension `dim`.
    pub fn hypercube(dim: u32) -> Self {
        assert!(dim < 31, "hypercube dimension too large");
        let n = 1u32 << dim;
        let edges = (0..n).flat_map(|a| {
            (0..dim)
                .map(move |bit| (a, a ^ (1 << bit)))
                .filter(|&(a, b)| a < b)
        });
        Self::from_undirected(n as usize, edges.collect::<Vec<_>>())
    }

    /// Complete graph on `n` nodes.
    pub fn full_mesh(n: usize) -> Self {
        assert!(n >= 1, "mesh needs at least one node");
        let n32 = n as u32;
        let edges = (0..n32).flat_map(|a| (a + 1..n32).map(move |b| (a, b)));
        Self::from_undirected(n, edges.collect::<Vec<_>>())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count as u32).map(NodeId)
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[(NodeId, NodeId)] {
        &self.arcs
    }

    pub fn arc(&self, idx: ArcIdx) -> (NodeId, NodeId) {
        self.arcs[idx]
    }

    pub fn arc_index(&self, src: NodeId, dst: NodeId) -> Option<ArcIdx> {
        self.index.get(&(src, dst)).copied()
    }

    pub fn incoming(&self, node: NodeId) -> &[ArcIdx] {
        &self.incoming[node.index()]
    }

    pub fn outgoing(&self, node: NodeId) -> &[ArcIdx] {
        &self.outgoing[node.index()]
    }

    /// Adjacent nodes, excluding the node itself, in index order.
    pub fn neighbours(&self, node: NodeId) -> &[NodeId] {
        &self.neighbours[node.index()]
    }

    pub fn is_neighbour(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.index.contains_key(&(a, b))
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.outgoing[node.index()].len()
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.incoming[node.index()].len()
    }

    /// Fresh empty queues, one per arc, in arc order.
    pub fn make_queues<M>(&self) -> Vec<ArcQueue<M>> {
        self.arcs.iter().map(|&(s, d)| ArcQueue::new(s, d)).collect()
    }

    /// Hop distances from `from`, `None` for unreachable nodes.
    pub fn bfs(&self, from: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count];
        let mut frontier = VecDeque::new();
        dist[from.index()] = Some(0);
        frontier.push_back(from);
        while let Some(u) = frontier.pop_front() {
            let du = dist[u.index()].unwrap();
            for &v in self.neighbours(u) {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    frontier.push_back(v);
                }
            }
        }
        dist
    }

    /// All-pairs hop distances; `u32::MAX` marks unreachable pairs.
    pub fn distance_matrix(&self) -> Vec<Vec<u32>> {
        self.nodes()
            .map(|u| self.bfs(u).into_iter().map(|d| d.unwrap_or(u32::MAX)).collect())
            .collect()
    }

    pub fn diameter(&self) -> u32 {
        self.distance_matrix()
            .iter()
            .flatten()
            .copied()
            .filter(|&d| d != u32::MAX)
            .max()
            .unwrap_or(0)
    }

    /// Text dump: a `nodes N` header, then one `src dst` line per arc.
    pub fn dump(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count);
        for (s, d) in &self.arcs {
            out.push_str(&format!("{s} {d}\n"));
        }
        out
    }

    /// Parses the output of [`NetworkGraph::dump`].
    pub fn parse_dump(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty dump")?;
        let n: usize = header
            .strip_prefix("nodes ")
            .ok_or_else(|| format!("bad header: {header}"))?
            .trim()
            .parse()
            .map_err(|e| format!("bad node count: {e}"))?;
        let mut arcs = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let mut field = || -> Result<u32, String> {
                it.next()
                    .ok_or_else(|| format!("short arc line: {line}"))?
                    .parse()
                    .map_err(|e| format!("bad arc line {line}: {e}"))
            };
            let s = field()?;
            let d = field()?;
            arcs.push((NodeId(s), NodeId(d)));
        }
        Ok(Self::from_arcs(n, arcs))
    }
}

/// Checks the three structural assumptions the routing rules rely on:
/// no dangling arcs, every inter-node arc has a reverse, every node has a
/// self-loop. Reports the first violation found, in that order.
pub fn validate(g: &NetworkGraph) -> Result<(), Violation> {
    let n = g.node_count();
    for &(src, dst) in g.arcs() {
        if src.index() >= n || dst.index() >= n {
            return Err(Violation::DanglingArc { src, dst });
        }
    }
    for &(src, dst) in g.arcs() {
        if src != dst && g.arc_index(dst, src).is_none() {
            return Err(Violation::MissingReverseArc { src, dst });
        }
    }
    for node in g.nodes() {
        if g.arc_index(node, node).is_none() {
            return Err(Violation::MissingSelfLoop { node });
        }
    }
    Ok(())
}
