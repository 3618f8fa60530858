//! The time-expanded graph.
//!
//! Each day splits into a first part (truck departures from sources) and a
//! second part (returns after the swap at a destination). The time indices
//! form the total order `R0 < L1 < R1 < ... < LJ < RJ`, with `R0` carrying
//! the initial conditions. Nodes are (location, time index) pairs; arcs only
//! connect consecutive layers and come in three families:
//!
//! - lower arcs, tails in the first parts: source-to-destination deliveries
//!   and destination self-arcs,
//! - upper arcs, tails in the second parts (including `R0`):
//!   destination-to-source returns and destination self-arcs,
//! - source self-arcs, one per parking slot, at every time index.
//!
//! Arcs with tail `RJ` point into a virtual terminal layer of sink nodes so
//! that day-J returns and parked storages have well-defined heads; nothing in
//! the model constrains that layer.

use crate::instance::Instance;
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

/// A point of the day-split time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeIndex {
    /// `R0`, the initial-conditions index.
    Initial,
    /// `Lj`, the first part of day j (1-based).
    FirstPart(usize),
    /// `Rj`, the second part of day j (1-based).
    SecondPart(usize),
    /// The virtual layer after `RJ`.
    Terminal,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeOrderError {
    #[error("{0} has no predecessor")]
    NoPredecessor(TimeIndex),
    #[error("{0} has no successor")]
    NoSuccessor(TimeIndex),
}

impl TimeIndex {
    /// Position in the total order; `Terminal` sorts after everything.
    pub fn rank(self) -> usize {
        match self {
            TimeIndex::Initial => 0,
            TimeIndex::FirstPart(j) => 2 * j - 1,
            TimeIndex::SecondPart(j) => 2 * j,
            TimeIndex::Terminal => usize::MAX,
        }
    }

    /// The day this index belongs to; 0 for `Initial`.
    pub fn day(self) -> usize {
        match self {
            TimeIndex::Initial => 0,
            TimeIndex::FirstPart(j) | TimeIndex::SecondPart(j) => j,
            TimeIndex::Terminal => usize::MAX,
        }
    }

    pub fn is_first_part(self) -> bool {
        matches!(self, TimeIndex::FirstPart(_))
    }

    /// Successor in the order over a horizon of `horizon` days; the terminal
    /// layer is the successor of the last second part.
    pub fn succ(self, horizon: usize) -> Result<TimeIndex, TimeOrderError> {
        match self {
            TimeIndex::Initial if horizon == 0 => Ok(TimeIndex::Terminal),
            TimeIndex::Initial => Ok(TimeIndex::FirstPart(1)),
            TimeIndex::FirstPart(j) => Ok(TimeIndex::SecondPart(j)),
            TimeIndex::SecondPart(j) if j < horizon => Ok(TimeIndex::FirstPart(j + 1)),
            TimeIndex::SecondPart(_) => Ok(TimeIndex::Terminal),
            TimeIndex::Terminal => Err(TimeOrderError::NoSuccessor(self)),
        }
    }

    pub fn pred(self, horizon: usize) -> Result<TimeIndex, TimeOrderError> {
        match self {
            TimeIndex::Initial => Err(TimeOrderError::NoPredecessor(self)),
            TimeIndex::FirstPart(1) => Ok(TimeIndex::Initial),
            TimeIndex::FirstPart(j) => Ok(TimeIndex::SecondPart(j - 1)),
            TimeIndex::SecondPart(j) => Ok(TimeIndex::FirstPart(j)),
            TimeIndex::Terminal if horizon == 0 => Ok(TimeIndex::Initial),
            TimeIndex::Terminal => Ok(TimeIndex::SecondPart(horizon)),
        }
    }

    fn from_rank(rank: usize) -> TimeIndex {
        if rank == 0 {
            TimeIndex::Initial
        } else if rank % 2 == 1 {
            TimeIndex::FirstPart(rank.div_ceil(2))
        } else {
            TimeIndex::SecondPart(rank / 2)
        }
    }
}

impl PartialOrd for TimeIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for TimeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeIndex::Initial => write!(f, "R0"),
            TimeIndex::FirstPart(j) => write!(f, "L{j}"),
            TimeIndex::SecondPart(j) => write!(f, "R{j}"),
            TimeIndex::Terminal => write!(f, "T"),
        }
    }
}

/// A physical node of the transport graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Source(usize),
    Destination(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Source(s) => write!(f, "s{s}"),
            Location::Destination(d) => write!(f, "d{d}"),
        }
    }
}

pub type ArcId = usize;

/// Arc family and endpoints; `time` is the time index of the tail node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArcKind {
    SourceToDest { source: usize, dest: usize },
    DestSelf { dest: usize },
    DestToSource { dest: usize, source: usize },
    SourceSelf { source: usize, slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub kind: ArcKind,
    pub time: TimeIndex,
}

/// The time-expanded graph of an instance. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TimeExpandedGraph {
    pub n_sources: usize,
    pub n_destinations: usize,
    pub horizon: usize,
    /// Parking slot limit per source.
    pub slot_limits: Vec<usize>,
    slot_offsets: Vec<usize>,
    total_slots: usize,
    arcs: Vec<Arc>,
    outgoing: Vec<Vec<ArcId>>,
    incoming: Vec<Vec<ArcId>>,
}

impl TimeExpandedGraph {
    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arc(&self, id: ArcId) -> &Arc {
        &self.arcs[id]
    }

    pub fn arcs(&self) -> impl Iterator<Item = (ArcId, &Arc)> {
        self.arcs.iter().enumerate()
    }

    /// Count of delivery-side arcs: (|S||D| + |D|) J.
    pub fn lower_arc_count(&self) -> usize {
        (self.n_sources * self.n_destinations + self.n_destinations) * self.horizon
    }

    /// Count of return-side arcs: (|D||S| + |D|)(J+1).
    pub fn upper_arc_count(&self) -> usize {
        (self.n_sources * self.n_destinations + self.n_destinations) * (self.horizon + 1)
    }

    /// Count of source self-arcs: (sum of slot limits)(2J+1).
    pub fn source_self_arc_count(&self) -> usize {
        self.total_slots * (2 * self.horizon + 1)
    }

    fn lower_block(&self, j: usize) -> usize {
        debug_assert!((1..=self.horizon).contains(&j));
        (j - 1) * (self.n_sources * self.n_destinations + self.n_destinations)
    }

    fn upper_block(&self, j0: usize) -> usize {
        debug_assert!(j0 <= self.horizon);
        self.lower_arc_count() + j0 * (self.n_sources * self.n_destinations + self.n_destinations)
    }

    fn tilde_block(&self, rank: usize) -> usize {
        debug_assert!(rank <= 2 * self.horizon);
        self.lower_arc_count() + self.upper_arc_count() + rank * self.total_slots
    }

    /// Delivery arc (s, d, Lj).
    pub fn arc_source_to_dest(&self, source: usize, dest: usize, j: usize) -> ArcId {
        self.lower_block(j) + source * self.n_destinations + dest
    }

    /// Return arc (d, s, Rj) with j = 0 meaning the initial layer.
    pub fn arc_dest_to_source(&self, dest: usize, source: usize, j0: usize) -> ArcId {
        self.upper_block(j0) + dest * self.n_sources + source
    }

    /// Destination self-arc (d, d, i) for any i in the day order.
    pub fn arc_dest_self(&self, dest: usize, time: TimeIndex) -> ArcId {
        match time {
            TimeIndex::FirstPart(j) => {
                self.lower_block(j) + self.n_sources * self.n_destinations + dest
            }
            TimeIndex::Initial => {
                self.upper_block(0) + self.n_destinations * self.n_sources + dest
            }
            TimeIndex::SecondPart(j) => {
                self.upper_block(j) + self.n_destinations * self.n_sources + dest
            }
            TimeIndex::Terminal => panic!("no arcs have a terminal tail"),
        }
    }

    /// Source self-arc (s:k, i), slot k 0-based, for any i in the day order.
    pub fn arc_source_self(&self, source: usize, slot: usize, time: TimeIndex) -> ArcId {
        debug_assert!(slot < self.slot_limits[source]);
        self.tilde_block(time.rank()) + self.slot_offsets[source] + slot
    }

    pub fn day(&self, id: ArcId) -> TimeIndex {
        self.arcs[id].time
    }

    pub fn tail(&self, id: ArcId) -> (Location, TimeIndex) {
        let arc = &self.arcs[id];
        let loc = match arc.kind {
            ArcKind::SourceToDest { source, .. } => Location::Source(source),
            ArcKind::DestSelf { dest } => Location::Destination(dest),
            ArcKind::DestToSource { dest, .. } => Location::Destination(dest),
            ArcKind::SourceSelf { source, .. } => Location::Source(source),
        };
        (loc, arc.time)
    }

    pub fn head(&self, id: ArcId) -> (Location, TimeIndex) {
        let arc = &self.arcs[id];
        let next = arc.time.succ(self.horizon).expect("arc tails precede the terminal layer");
        let loc = match arc.kind {
            ArcKind::SourceToDest { dest, .. } => Location::Destination(dest),
            ArcKind::DestSelf { dest } => Location::Destination(dest),
            ArcKind::DestToSource { source, .. } => Location::Source(source),
            ArcKind::SourceSelf { source, .. } => Location::Source(source),
        };
        (loc, next)
    }

    /// All arcs with tail time `i`, i.e. one slice of the arc partition.
    pub fn arcs_at(&self, time: TimeIndex) -> impl Iterator<Item = ArcId> {
        let group = self.n_sources * self.n_destinations + self.n_destinations;
        let (a, b) = match time {
            TimeIndex::FirstPart(j) => (self.lower_block(j), group),
            TimeIndex::Initial => (self.upper_block(0), group),
            TimeIndex::SecondPart(j) => (self.upper_block(j), group),
            TimeIndex::Terminal => panic!("no arcs have a terminal tail"),
        };
        let t = self.tilde_block(time.rank());
        (a..a + b).chain(t..t + self.total_slots)
    }

    /// All time indices carrying arcs, in order: R0, L1, R1, ..., LJ, RJ.
    pub fn day_order(&self) -> impl Iterator<Item = TimeIndex> {
        (0..=2 * self.horizon).map(TimeIndex::from_rank)
    }

    pub fn node_count(&self) -> usize {
        (self.n_sources + self.n_destinations) * (2 * self.horizon + 2)
    }

    pub fn node_id(&self, loc: Location, time: TimeIndex) -> usize {
        let layer = if time == TimeIndex::Terminal { 2 * self.horizon + 1 } else { time.rank() };
        let offset = match loc {
            Location::Source(s) => s,
            Location::Destination(d) => self.n_sources + d,
        };
        layer * (self.n_sources + self.n_destinations) + offset
    }

    pub fn outgoing(&self, loc: Location, time: TimeIndex) -> &[ArcId] {
        &self.outgoing[self.node_id(loc, time)]
    }

    pub fn incoming(&self, loc: Location, time: TimeIndex) -> &[ArcId] {
        &self.incoming[self.node_id(loc, time)]
    }

    /// GraphViz dump with "(v, i)" node labels, for debugging.
    pub fn write_dot(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "digraph teg {{")?;
        writeln!(out, "  rankdir=LR;")?;
        for (id, arc) in self.arcs() {
            let (tl, tt) = self.tail(id);
            let (hl, ht) = self.head(id);
            let label = match arc.kind {
                ArcKind::SourceSelf { slot, .. } => format!(":{}", slot + 1),
                _ => String::new(),
            };
            writeln!(out, "  \"({tl}, {tt})\" -> \"({hl}, {ht})\" [label=\"{label}\"];")?;
        }
        writeln!(out, "}}")
    }
}

/// Instantiates all three arc families and the adjacency lists.
pub fn build_teg(instance: &Instance) -> TimeExpandedGraph {
    let n_s = instance.n_sources();
    let n_d = instance.n_destinations();
    let horizon = instance.horizon;
    let slot_limits: Vec<usize> = instance.sources.iter().map(|s| s.slot_limit).collect();
    let mut slot_offsets = Vec::with_capacity(n_s);
    let mut total_slots = 0;
    for &k in &slot_limits {
        slot_offsets.push(total_slots);
        total_slots += k;
    }

    let mut arcs = Vec::new();
    for j in 1..=horizon {
        for source in 0..n_s {
            for dest in 0..n_d {
                arcs.push(Arc {
                    kind: ArcKind::SourceToDest { source, dest },
                    time: TimeIndex::FirstPart(j),
                });
            }
        }
        for dest in 0..n_d {
            arcs.push(Arc { kind: ArcKind::DestSelf { dest }, time: TimeIndex::FirstPart(j) });
        }
    }
    for j0 in 0..=horizon {
        let time = if j0 == 0 { TimeIndex::Initial } else { TimeIndex::SecondPart(j0) };
        for dest in 0..n_d {
            for source in 0..n_s {
                arcs.push(Arc { kind: ArcKind::DestToSource { dest, source }, time });
            }
        }
        for dest in 0..n_d {
            arcs.push(Arc { kind: ArcKind::DestSelf { dest }, time });
        }
    }
    for rank in 0..=2 * horizon {
        let time = TimeIndex::from_rank(rank);
        for source in 0..n_s {
            for slot in 0..slot_limits[source] {
                arcs.push(Arc { kind: ArcKind::SourceSelf { source, slot }, time });
            }
        }
    }

    let mut teg = TimeExpandedGraph {
        n_sources: n_s,
        n_destinations: n_d,
        horizon,
        slot_limits,
        slot_offsets,
        total_slots,
        arcs,
        outgoing: Vec::new(),
        incoming: Vec::new(),
    };
    let mut outgoing = vec![Vec::new(); teg.node_count()];
    let mut incoming = vec![Vec::new(); teg.node_count()];
    for id in 0..teg.arc_count() {
        let (tl, tt) = teg.tail(id);
        let (hl, ht) = teg.head(id);
        outgoing[teg.node_id(tl, tt)].push(id);
        incoming[teg.node_id(hl, ht)].push(id);
    }
    teg.outgoing = outgoing;
    teg.incoming = incoming;
    teg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn tiny(n_s: usize, n_d: usize, slots: usize, horizon: usize) -> TimeExpandedGraph {
        build_teg(&fixtures::uniform_instance(n_s, n_d, slots, horizon))
    }

    #[test]
    fn successor_and_predecessor_rules() {
        let horizon = 4;
        assert_eq!(TimeIndex::FirstPart(3).succ(horizon).unwrap(), TimeIndex::SecondPart(3));
        assert_eq!(TimeIndex::FirstPart(1).pred(horizon).unwrap(), TimeIndex::Initial);
        assert_eq!(TimeIndex::FirstPart(2).pred(horizon).unwrap(), TimeIndex::SecondPart(1));
        assert_eq!(TimeIndex::SecondPart(2).succ(horizon).unwrap(), TimeIndex::FirstPart(3));
        assert_eq!(TimeIndex::SecondPart(2).pred(horizon).unwrap(), TimeIndex::FirstPart(2));
        assert_eq!(TimeIndex::SecondPart(4).succ(horizon).unwrap(), TimeIndex::Terminal);
        assert!(TimeIndex::Initial.pred(horizon).is_err());
        assert!(TimeIndex::Terminal.succ(horizon).is_err());
        // succ and pred are inverse on the interior of the order.
        for rank in 0..=2 * horizon {
            let i = TimeIndex::from_rank(rank);
            assert_eq!(i.succ(horizon).unwrap().pred(horizon).unwrap(), i);
        }
    }

    #[test]
    fn arc_counts_match_closed_forms() {
        // |S|=1, |D|=2, slots 2, J=2.
        let teg = tiny(1, 2, 2, 2);
        assert_eq!(teg.lower_arc_count(), (1 * 2 + 2) * 2);
        assert_eq!(teg.upper_arc_count(), (2 * 1 + 2) * 3);
        assert_eq!(teg.source_self_arc_count(), 2 * 5);
        assert_eq!(teg.arc_count(), 8 + 12 + 10);

        // The closed forms agree with direct enumeration of the stored arcs.
        let by_kind = |f: fn(&ArcKind) -> bool| teg.arcs().filter(|(_, a)| f(&a.kind)).count();
        let lower = teg
            .arcs()
            .filter(|(_, a)| {
                a.time.is_first_part()
                    && matches!(a.kind, ArcKind::SourceToDest { .. } | ArcKind::DestSelf { .. })
            })
            .count();
        assert_eq!(lower, teg.lower_arc_count());
        assert_eq!(by_kind(|k| matches!(k, ArcKind::SourceSelf { .. })), teg.source_self_arc_count());
    }

    #[test]
    fn empty_horizon_keeps_only_initial_layers() {
        let teg = tiny(2, 1, 1, 0);
        assert_eq!(teg.lower_arc_count(), 0);
        assert_eq!(teg.upper_arc_count(), 2 * 1 + 1);
        assert_eq!(teg.source_self_arc_count(), 2);
        let at_initial: Vec<_> = teg.arcs_at(TimeIndex::Initial).collect();
        assert_eq!(at_initial.len(), teg.arc_count());
    }

    #[test]
    fn tail_head_examples() {
        let teg = tiny(1, 2, 2, 2);
        let a = teg.arc_source_to_dest(0, 1, 2);
        assert_eq!(teg.tail(a), (Location::Source(0), TimeIndex::FirstPart(2)));
        assert_eq!(teg.head(a), (Location::Destination(1), TimeIndex::SecondPart(2)));

        let b = teg.arc_dest_self(0, TimeIndex::Initial);
        assert_eq!(teg.head(b), (Location::Destination(0), TimeIndex::FirstPart(1)));

        let c = teg.arc_source_self(0, 1, TimeIndex::SecondPart(2));
        assert_eq!(teg.head(c), (Location::Source(0), TimeIndex::Terminal));

        let d = teg.arc_dest_to_source(1, 0, 2);
        assert_eq!(teg.head(d), (Location::Source(0), TimeIndex::Terminal));
    }

    #[test]
    fn arcs_at_partitions_the_graph() {
        let teg = tiny(2, 2, 2, 3);
        let mut seen = vec![false; teg.arc_count()];
        for i in teg.day_order() {
            for id in teg.arcs_at(i) {
                assert!(!seen[id], "arc {id} listed twice");
                seen[id] = true;
                assert_eq!(teg.day(id), i);
            }
        }
        assert!(seen.iter().all(|&x| x));

        // First parts carry no return arcs.
        for id in teg.arcs_at(TimeIndex::FirstPart(2)) {
            assert!(!matches!(teg.arc(id).kind, ArcKind::DestToSource { .. }));
        }

        // Initial layer size: |D||S| + |D| + total slots.
        assert_eq!(teg.arcs_at(TimeIndex::Initial).count(), 2 * 2 + 2 + 4);
    }

    #[test]
    fn adjacency_is_consistent() {
        let teg = tiny(2, 2, 2, 2);
        for (id, _) in teg.arcs() {
            let (tl, tt) = teg.tail(id);
            let (hl, ht) = teg.head(id);
            assert!(teg.outgoing(tl, tt).contains(&id));
            assert!(teg.incoming(hl, ht).contains(&id));
            assert_eq!(ht.rank(), tt.succ(teg.horizon).unwrap().rank());
        }
        // Arc id lookups invert arc storage.
        for (id, arc) in teg.arcs() {
            let looked_up = match arc.kind {
                ArcKind::SourceToDest { source, dest } => {
                    teg.arc_source_to_dest(source, dest, arc.time.day())
                }
                ArcKind::DestSelf { dest } => teg.arc_dest_self(dest, arc.time),
                ArcKind::DestToSource { dest, source } => {
                    teg.arc_dest_to_source(dest, source, arc.time.day())
                }
                ArcKind::SourceSelf { source, slot } => teg.arc_source_self(source, slot, arc.time),
            };
            assert_eq!(looked_up, id);
        }
    }

    #[test]
    fn no_arc_links_two_distinct_destinations_or_sources() {
        let teg = tiny(2, 2, 2, 2);
        for (id, _) in teg.arcs() {
            let (tl, _) = teg.tail(id);
            let (hl, _) = teg.head(id);
            match (tl, hl) {
                (Location::Destination(a), Location::Destination(b)) => assert_eq!(a, b),
                (Location::Source(a), Location::Source(b)) => assert_eq!(a, b),
                _ => {}
            }
        }
    }

    #[test]
    fn dot_dump_mentions_labelled_nodes() {
        let teg = tiny(1, 2, 2, 1);
        let mut buf = Vec::new();
        teg.write_dot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"(s0, R0)\""));
        assert!(text.contains("\"(d1, L1)\""));
    }
}
