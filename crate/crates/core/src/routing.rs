//! Per-node routing tables keyed by object identifier.
//!
//! Tables map every known object to a next hop and a hop distance. They are
//! merged from neighbour snapshots with a distance-vector rule: a neighbour's
//! route is adopted only when it is strictly shorter than the incumbent once
//! the extra hop through that neighbour is added. Local objects (distance 0)
//! are never displaced by gossip; only migration bookkeeping (`replace`)
//! moves them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::netgraph::NodeId;

/// Globally unique object identifier: the node the object was created on
/// plus that node's creation counter. Identifiers are never reused.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ObjectId {
    pub birth: NodeId,
    pub seq: u32,
}

impl ObjectId {
    pub fn new(birth: NodeId, seq: u32) -> Self {
        ObjectId { birth, seq }
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.birth.0, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub next_hop: NodeId,
    pub distance: u32,
}

/// Routing table of a single node. Entries are kept sorted by object id so
/// that merging a neighbour snapshot is a single linear pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    owner: NodeId,
    entries: Vec<(ObjectId, RouteEntry)>,
}

impl RoutingTable {
    pub fn new(owner: NodeId) -> Self {
        RoutingTable {
            owner,
            entries: Vec::new(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, RouteEntry)> + '_ {
        self.entries.iter().copied()
    }

    fn position(&self, o: ObjectId) -> Result<usize, usize> {
        self.entries.binary_search_by_key(&o, |(id, _)| *id)
    }

    pub fn get(&self, o: ObjectId) -> Option<RouteEntry> {
        self.position(o).ok().map(|i| self.entries[i].1)
    }

    /// Incorporates the routes of the adjacent node `via`, each lengthened by
    /// one hop. Returns whether any entry changed.
    pub fn update(&mut self, via: NodeId, adjacent: &RoutingTable) -> bool {
        debug_assert_ne!(via, self.owner, "tables are never exchanged over self-loops");
        let mut changed = false;
        let mut additions = Vec::new();
        let mut i = 0;
        for &(o, e) in &adjacent.entries {
            let offered = RouteEntry {
                next_hop: via,
                distance: e.distance.saturating_add(1),
            };
            while i < self.entries.len() && self.entries[i].0 < o {
                i += 1;
            }
            match self.entries.get_mut(i) {
                Some((id, cur)) if *id == o => {
                    if cur.distance > offered.distance {
                        *cur = offered;
                        changed = true;
                    }
                }
                _ => additions.push((o, offered)),
            }
        }
        if !additions.is_empty() {
            changed = true;
            let old = std::mem::take(&mut self.entries);
            self.entries = merge_sorted(old, additions);
        }
        changed
    }

    /// Next hop towards `o`, or `default` when the table has no route.
    pub fn next(&self, o: ObjectId, default: NodeId) -> NodeId {
        self.get(o).map_or(default, |e| e.next_hop)
    }

    /// Adds or overwrites the route for `o`.
    pub fn register(&mut self, o: ObjectId, next_hop: NodeId, distance: u32) {
        let entry = RouteEntry { next_hop, distance };
        match self.position(o) {
            Ok(i) => self.entries[i].1 = entry,
            Err(i) => self.entries.insert(i, (o, entry)),
        }
    }

    /// Drops whatever route exists for `o` and installs the given one.
    pub fn replace(&mut self, o: ObjectId, next_hop: NodeId, distance: u32) {
        // one entry per object, so replacing is registering
        self.register(o, next_hop, distance);
    }

    /// True iff the table says `o` is located on the owning node.
    pub fn contains(&self, o: ObjectId) -> bool {
        self.get(o).is_some_and(|e| e.distance == 0)
    }

    /// One `objectId nextHop distance` line per entry.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (o, e) in &self.entries {
            out.push_str(&format!("{o} {} {}\n", e.next_hop, e.distance));
        }
        out
    }
}

fn merge_sorted(
    a: Vec<(ObjectId, RouteEntry)>,
    b: Vec<(ObjectId, RouteEntry)>,
) -> Vec<(ObjectId, RouteEntry)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut a = a.into_iter().peekable();
    let mut b = b.into_iter().peekable();
    loop {
        match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => {
                if x.0 < y.0 {
                    out.push(a.next().unwrap());
                } else {
                    out.push(b.next().unwrap());
                }
            }
            (Some(_), None) => out.extend(a.by_ref()),
            (None, Some(_)) => out.extend(b.by_ref()),
            (None, None) => break,
        }
    }
    out
}
