//! Load gossip bookkeeping and the migration procedures.
//!
//! A procedure runs once per migration cycle on every node and returns the
//! objects it wants to move, each paired with a neighbour. It sees only the
//! node's own objects and routing table plus the last load each neighbour
//! reported.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::actors::RuntimeObject;
use crate::netgraph::NodeId;
use crate::routing::{ObjectId, RoutingTable};

/// Last load reported by each neighbour and the round it arrived in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighbourLoads {
    known: BTreeMap<NodeId, (u32, u64)>,
}

impl NeighbourLoads {
    pub fn record(&mut self, from: NodeId, load: u32, round: u64) {
        self.known.insert(from, (load, round));
    }

    pub fn get(&self, n: NodeId) -> Option<u32> {
        self.known.get(&n).map(|&(l, _)| l)
    }

    pub fn as_of(&self, n: NodeId) -> Option<u64> {
        self.known.get(&n).map(|&(_, r)| r)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

/// Whether a node should announce `current` to its neighbours: on any
/// change, and at least once per migration cycle.
pub fn should_broadcast(last_sent: Option<u32>, current: u32, cycle_floor_due: bool) -> bool {
    last_sent != Some(current) || cycle_floor_due
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureKind {
    /// No migrations at all.
    None,
    Berenbrink,
    BerenbrinkNeutral,
    BerenbrinkComm,
    WeightedLoadDiff,
    WeightedLoadComm,
}

impl ProcedureKind {
    pub const ALL: [ProcedureKind; 6] = [
        ProcedureKind::None,
        ProcedureKind::Berenbrink,
        ProcedureKind::BerenbrinkNeutral,
        ProcedureKind::BerenbrinkComm,
        ProcedureKind::WeightedLoadDiff,
        ProcedureKind::WeightedLoadComm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProcedureKind::None => "none",
            ProcedureKind::Berenbrink => "berenbrink",
            ProcedureKind::BerenbrinkNeutral => "berenbrink_neutral",
            ProcedureKind::BerenbrinkComm => "berenbrink_comm",
            ProcedureKind::WeightedLoadDiff => "weighted_load_diff",
            ProcedureKind::WeightedLoadComm => "weighted_load_comm",
        }
    }
}

impl fmt::Display for ProcedureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProcedureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown procedure {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcedureParams {
    /// Most migrations per node and cycle without neutral moves.
    pub cap: usize,
    /// Most migrations per node and cycle when neutral moves are allowed.
    pub neutral_cap: usize,
    /// Load difference at which the weighted procedures always migrate.
    pub threshold: f64,
    pub comm_weight: f64,
    pub load_weight: f64,
}

impl Default for ProcedureParams {
    fn default() -> Self {
        ProcedureParams {
            cap: 20,
            neutral_cap: 2,
            threshold: 10.0,
            comm_weight: 0.2,
            load_weight: 0.8,
        }
    }
}

/// What a procedure may look at on its own node.
pub struct NodeView<'a> {
    pub node: NodeId,
    pub neighbours: &'a [NodeId],
    pub objects: &'a [RuntimeObject],
    pub table: &'a RoutingTable,
    pub loads: &'a NeighbourLoads,
}

impl NodeView<'_> {
    pub fn load(&self) -> u32 {
        self.objects.iter().filter(|o| o.is_active()).count() as u32
    }

    fn active_by_id(&self) -> Vec<&RuntimeObject> {
        let mut v: Vec<_> = self.objects.iter().filter(|o| o.is_active()).collect();
        v.sort_by_key(|o| o.id);
        v
    }

    fn random_neighbour(&self, rng: &mut impl Rng) -> NodeId {
        self.neighbours[rng.gen_range(0..self.neighbours.len())]
    }
}

/// History entries routed towards `toward`, and their share of the history.
pub fn affinity(
    history: &VecDeque<ObjectId>,
    table: &RoutingTable,
    here: NodeId,
    toward: NodeId,
) -> (usize, f64) {
    let count = history
        .iter()
        .filter(|&&o| table.next(o, here) == toward)
        .count();
    let fraction = if history.is_empty() {
        0.0
    } else {
        count as f64 / history.len() as f64
    };
    (count, fraction)
}

/// Migration probability of the load-balancing cycle, or `None` when the
/// move is not allowed at all.
pub fn berenbrink_probability(l: u32, l_neighbour: u32, neutral: bool) -> Option<f64> {
    let allowed = if neutral {
        l > l_neighbour
    } else {
        l > l_neighbour + 1
    };
    allowed.then(|| 1.0 - l_neighbour as f64 / l as f64)
}

/// Load-difference probability `d / threshold` clamped to `[0, 1]`.
pub fn load_diff_probability(d: i64, threshold: f64) -> f64 {
    (d as f64 / threshold).clamp(0.0, 1.0)
}

pub fn berenbrink_cycle(
    view: &NodeView<'_>,
    neutral: bool,
    cap: usize,
    rng: &mut impl Rng,
) -> Vec<(ObjectId, NodeId)> {
    let mut out = Vec::new();
    if view.neighbours.is_empty() {
        return out;
    }
    let l = view.load();
    for o in view.active_by_id() {
        if out.len() >= cap {
            break;
        }
        let target = view.random_neighbour(rng);
        let Some(l2) = view.loads.get(target) else {
            continue;
        };
        if let Some(p) = berenbrink_probability(l, l2, neutral) {
            if rng.gen_bool(p) {
                out.push((o.id, target));
            }
        }
    }
    out
}

/// Neutral cycle in which each iteration's neighbour picks the candidate
/// with the most history entries routed its way.
pub fn berenbrink_comm_cycle(
    view: &NodeView<'_>,
    cap: usize,
    rng: &mut impl Rng,
) -> Vec<(ObjectId, NodeId)> {
    let mut out = Vec::new();
    if view.neighbours.is_empty() {
        return out;
    }
    let l = view.load();
    let mut candidates = view.active_by_id();
    while !candidates.is_empty() && out.len() < cap {
        let target = view.random_neighbour(rng);
        // max_by_key keeps the last maximum; iterate in reverse so ties go to
        // the smallest id
        let (pos, _) = candidates
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|(_, o)| affinity(&o.history, view.table, view.node, target).0)
            .unwrap();
        let o = candidates.remove(pos);
        let Some(l2) = view.loads.get(target) else {
            continue;
        };
        if let Some(p) = berenbrink_probability(l, l2, true) {
            if rng.gen_bool(p) {
                out.push((o.id, target));
            }
        }
    }
    out
}

fn random_pair<'a>(
    view: &'a NodeView<'_>,
    rng: &mut impl Rng,
) -> Option<(&'a RuntimeObject, NodeId, u32)> {
    if view.objects.is_empty() || view.neighbours.is_empty() {
        return None;
    }
    let o = &view.objects[rng.gen_range(0..view.objects.len())];
    let target = view.random_neighbour(rng);
    view.loads.get(target).map(|l2| (o, target, l2))
}

pub fn weighted_load_diff_cycle(
    view: &NodeView<'_>,
    params: &ProcedureParams,
    rng: &mut impl Rng,
) -> Vec<(ObjectId, NodeId)> {
    let Some((o, target, l2)) = random_pair(view, rng) else {
        return Vec::new();
    };
    let p = load_diff_probability(view.load() as i64 - l2 as i64, params.threshold);
    if rng.gen_bool(p) {
        vec![(o.id, target)]
    } else {
        Vec::new()
    }
}

pub fn weighted_load_comm_cycle(
    view: &NodeView<'_>,
    params: &ProcedureParams,
    rng: &mut impl Rng,
) -> Vec<(ObjectId, NodeId)> {
    let Some((o, target, l2)) = random_pair(view, rng) else {
        return Vec::new();
    };
    let (_, frac) = affinity(&o.history, view.table, view.node, target);
    let p_load = load_diff_probability(view.load() as i64 - l2 as i64, params.threshold);
    let p = (params.comm_weight * frac + params.load_weight * p_load).clamp(0.0, 1.0);
    if rng.gen_bool(p) {
        vec![(o.id, target)]
    } else {
        Vec::new()
    }
}

/// One migration cycle of `kind` on the viewed node.
pub fn run_cycle(
    kind: ProcedureKind,
    params: &ProcedureParams,
    view: &NodeView<'_>,
    rng: &mut impl Rng,
) -> Vec<(ObjectId, NodeId)> {
    match kind {
        ProcedureKind::None => Vec::new(),
        ProcedureKind::Berenbrink => berenbrink_cycle(view, false, params.cap, rng),
        ProcedureKind::BerenbrinkNeutral => berenbrink_cycle(view, true, params.neutral_cap, rng),
        ProcedureKind::BerenbrinkComm => berenbrink_comm_cycle(view, params.neutral_cap, rng),
        ProcedureKind::WeightedLoadDiff => weighted_load_diff_cycle(view, params, rng),
        ProcedureKind::WeightedLoadComm => weighted_load_comm_cycle(view, params, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::Task;
    use crate::scenarios::{Behavior, Method};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oid(n: u32, s: u32) -> ObjectId {
        ObjectId::new(NodeId(n), s)
    }

    fn active(id: ObjectId, history: &[ObjectId]) -> RuntimeObject {
        let mut o = RuntimeObject::new(id, Behavior::Worker, 32);
        o.task = Some(Task::bootstrap(Method::Run));
        for &h in history {
            o.record_history(h);
        }
        o
    }

    #[test]
    fn berenbrink_probabilities() {
        assert_eq!(berenbrink_probability(4, 2, false), Some(0.5));
        assert_eq!(berenbrink_probability(3, 2, false), None);
        let p = berenbrink_probability(3, 2, true).unwrap();
        assert!((p - (1.0 - 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn load_diff_probabilities() {
        assert_eq!(load_diff_probability(10, 10.0), 1.0);
        assert_eq!(load_diff_probability(-1, 10.0), 0.0);
        assert_eq!(load_diff_probability(5, 10.0), 0.5);
        assert_eq!(load_diff_probability(25, 10.0), 1.0);
    }

    #[test]
    fn weighted_comm_combination() {
        let p = |frac: f64, d: i64| 0.2 * frac + 0.8 * load_diff_probability(d, 10.0);
        assert!((p(1.0, 0) - 0.2).abs() < 1e-12);
        assert!((p(0.0, 10) - 0.8).abs() < 1e-12);
        assert!((p(0.5, 5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn affinity_examples() {
        let here = NodeId(0);
        let (a, b) = (oid(5, 0), oid(5, 1));
        let mut t = RoutingTable::new(here);
        t.register(a, NodeId(1), 1);
        t.register(b, NodeId(1), 2);
        let h: VecDeque<_> = vec![a, b, a].into();
        assert_eq!(affinity(&h, &t, here, NodeId(1)), (3, 1.0));
        assert_eq!(affinity(&VecDeque::new(), &t, here, NodeId(1)), (0, 0.0));
        t.register(b, here, 0);
        let h: VecDeque<_> = vec![a, b].into();
        assert_eq!(affinity(&h, &t, here, NodeId(1)), (1, 0.5));
    }

    #[test]
    fn broadcast_cadence() {
        assert!(should_broadcast(None, 0, false));
        assert!(!should_broadcast(Some(3), 3, false));
        assert!(should_broadcast(Some(3), 3, true));
        assert!(should_broadcast(Some(3), 4, false));
    }

    #[test]
    fn comm_cycle_offers_highest_affinity_first() {
        let here = NodeId(0);
        let partner = oid(9, 0);
        let mut t = RoutingTable::new(here);
        t.register(partner, NodeId(1), 1);
        let objects = vec![
            active(oid(0, 0), &[]),
            active(oid(0, 1), &[partner, partner, partner]),
        ];
        let mut loads = NeighbourLoads::default();
        loads.record(NodeId(1), 0, 0);
        let view = NodeView {
            node: here,
            neighbours: &[NodeId(1)],
            objects: &objects,
            table: &t,
            loads: &loads,
        };
        // l = 2 > l' = 0, probability 1: the first offer always moves
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let moves = berenbrink_comm_cycle(&view, 1, &mut rng);
        assert_eq!(moves, vec![(oid(0, 1), NodeId(1))]);
    }

    #[test]
    fn comm_cycle_without_affinity_matches_neutral() {
        let here = NodeId(0);
        let objects: Vec<_> = (0..8).map(|s| active(oid(0, s), &[])).collect();
        let mut loads = NeighbourLoads::default();
        loads.record(NodeId(1), 1, 0);
        loads.record(NodeId(2), 5, 0);
        loads.record(NodeId(3), 2, 0);
        let t = RoutingTable::new(here);
        let view = NodeView {
            node: here,
            neighbours: &[NodeId(1), NodeId(2), NodeId(3)],
            objects: &objects,
            table: &t,
            loads: &loads,
        };
        for seed in 0..50 {
            let a = berenbrink_cycle(&view, true, 2, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = berenbrink_comm_cycle(&view, 2, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_neighbours_are_skipped() {
        let objects: Vec<_> = (0..5).map(|s| active(oid(0, s), &[])).collect();
        let t = RoutingTable::new(NodeId(0));
        let loads = NeighbourLoads::default();
        let view = NodeView {
            node: NodeId(0),
            neighbours: &[NodeId(1)],
            objects: &objects,
            table: &t,
            loads: &loads,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in ProcedureKind::ALL {
            assert!(run_cycle(kind, &ProcedureParams::default(), &view, &mut rng).is_empty());
        }
    }

    #[test]
    fn procedure_names_round_trip() {
        for k in ProcedureKind::ALL {
            assert_eq!(k.name().parse::<ProcedureKind>(), Ok(k));
        }
        assert!("greedy".parse::<ProcedureKind>().is_err());
    }

    proptest! {
        #[test]
        fn emits_only_neighbours_within_cap(
            n_objects in 0usize..30,
            neighbour_loads in proptest::collection::vec(proptest::option::of(0u32..40), 1..6),
            seed in any::<u64>(),
            kind_idx in 0usize..6,
        ) {
            let kind = ProcedureKind::ALL[kind_idx];
            let here = NodeId(0);
            let neighbours: Vec<NodeId> = (1..=neighbour_loads.len() as u32).map(NodeId).collect();
            let mut loads = NeighbourLoads::default();
            for (n, l) in neighbours.iter().zip(&neighbour_loads) {
                if let Some(l) = l {
                    loads.record(*n, *l, 0);
                }
            }
            let objects: Vec<_> = (0..n_objects as u32).map(|s| active(oid(0, s), &[])).collect();
            let t = RoutingTable::new(here);
            let view = NodeView { node: here, neighbours: &neighbours, objects: &objects, table: &t, loads: &loads };
            let params = ProcedureParams::default();
            let moves = run_cycle(kind, &params, &view, &mut ChaCha8Rng::seed_from_u64(seed));
            let cap = match kind {
                ProcedureKind::Berenbrink => params.cap,
                ProcedureKind::BerenbrinkNeutral | ProcedureKind::BerenbrinkComm => params.neutral_cap,
                ProcedureKind::None => 0,
                _ => 1,
            };
            prop_assert!(moves.len() <= cap);
            for (o, to) in &moves {
                prop_assert!(neighbours.contains(to));
                prop_assert!(objects.iter().any(|x| x.id == *o));
            }
            let mut ids: Vec<_> = moves.iter().map(|m| m.0).collect();
            ids.dedup();
            prop_assert_eq!(ids.len(), moves.len());
            // same stream, same answer
            let again = run_cycle(kind, &params, &view, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(moves, again);
        }

        #[test]
        fn non_neutral_fixpoint_emits_nothing(
            l in 0u32..30,
            diffs in proptest::collection::vec(-1i64..=1, 1..6),
            seed in any::<u64>(),
        ) {
            let here = NodeId(0);
            let neighbours: Vec<NodeId> = (1..=diffs.len() as u32).map(NodeId).collect();
            let mut loads = NeighbourLoads::default();
            for (n, d) in neighbours.iter().zip(&diffs) {
                loads.record(*n, (l as i64 + d).max(0) as u32, 0);
            }
            let objects: Vec<_> = (0..l).map(|s| active(oid(0, s), &[])).collect();
            let t = RoutingTable::new(here);
            let view = NodeView { node: here, neighbours: &neighbours, objects: &objects, table: &t, loads: &loads };
            let moves = berenbrink_cycle(&view, false, 20, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(moves.is_empty());
        }
    }
}
