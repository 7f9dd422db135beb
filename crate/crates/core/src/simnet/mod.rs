// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event network simulator.
//!
//! Time is integer nanoseconds. Events pop in `(time, insertion seq)` order.
//! Every directed link is a FIFO pipe: a message occupies the link for its
//! transfer time and arrives one base latency after leaving it.

mod hardware;
mod topology;

pub use hardware::{HardwareProfile, LinearCost};
pub use topology::{LinkProfile, Location, Topology, GBPS, MBPS};

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::time::Duration;

use fnv::FnvHashMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinkScope, NodeId};

pub type SimTime = u64;

pub fn to_sim(d: Duration) -> SimTime {
    d.as_nanos() as SimTime
}

pub fn from_sim(t: SimTime) -> Duration {
    Duration::from_nanos(t)
}

pub fn sim_micros(us: f64) -> SimTime {
    (us.max(0.0) * 1000.0).round() as SimTime
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid fault sequence: {0}")]
    InvalidFaultSequence(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FaultKind {
    Partition {
        side_a: BTreeSet<NodeId>,
        side_b: BTreeSet<NodeId>,
    },
    Heal,
    Crash(NodeId),
    Recover(NodeId),
    /// New cross-datacenter bandwidth in bytes per second.
    Bandwidth(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub at: SimTime,
    pub kind: FaultKind,
}

/// Checks heal-after-partition and recover-after-crash ordering.
pub fn validate_faults(specs: &[FaultSpec], node_count: usize) -> Result<(), SimError> {
    let mut sorted: Vec<&FaultSpec> = specs.iter().collect();
    sorted.sort_by_key(|s| s.at);
    let mut partitions = 0usize;
    let mut crashed = BTreeSet::new();
    let bad = |m: String| Err(SimError::InvalidFaultSequence(m));
    for s in sorted {
        match &s.kind {
            FaultKind::Partition { side_a, side_b } => {
                if side_a.is_empty() || side_b.is_empty() || !side_a.is_disjoint(side_b) {
                    return bad("partition sides must be non-empty and disjoint".into());
                }
                if side_a
                    .iter()
                    .chain(side_b)
                    .any(|n| n.0 as usize >= node_count)
                {
                    return bad("partition names an unknown node".into());
                }
                partitions += 1;
            }
            FaultKind::Heal => {
                if partitions == 0 {
                    return bad(format!("heal at {} without an active partition", s.at));
                }
                partitions = 0;
            }
            FaultKind::Crash(n) => {
                if n.0 as usize >= node_count || !crashed.insert(*n) {
                    return bad(format!("crash of {n} at {} is not valid", s.at));
                }
            }
            FaultKind::Recover(n) => {
                if !crashed.remove(n) {
                    return bad(format!("recover of {n} at {} without a crash", s.at));
                }
            }
            FaultKind::Bandwidth(b) => {
                if b.is_nan() || *b <= 0.0 {
                    return bad("bandwidth must be positive".into());
                }
            }
        }
    }
    Ok(())
}

/// Per-node clock offsets drawn uniformly from `[-epsilon, +epsilon]`.
#[derive(Debug, Clone)]
pub struct SkewedClock {
    offsets: Vec<i64>,
    epsilon: Duration,
}

impl SkewedClock {
    pub fn new(nodes: usize, epsilon: Duration, rng: &mut impl Rng) -> Self {
        let eps = epsilon.as_nanos() as i64;
        let offsets = (0..nodes)
            .map(|_| {
                if eps == 0 {
                    0
                } else {
                    rng.random_range(-eps..=eps)
                }
            })
            .collect();
        SkewedClock { offsets, epsilon }
    }

    pub fn epsilon(&self) -> Duration {
        self.epsilon
    }

    pub fn offset(&self, node: NodeId) -> i64 {
        self.offsets[node.0 as usize]
    }

    pub fn read(&self, now: SimTime, node: NodeId) -> SimTime {
        (now as i64 + self.offset(node)).max(0) as SimTime
    }
}

/// One parsed trace line: time, node, kind and digest.
pub type TraceRow = (SimTime, Option<u32>, String, u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub node: Option<NodeId>,
    pub kind: &'static str,
    pub digest: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, time: SimTime, node: Option<NodeId>, kind: &'static str, digest: u64) {
        self.events.push(TraceEvent {
            time,
            node,
            kind,
            digest,
        });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One tab-separated line per event: time, node, kind, digest.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("time_ns\tnode\tkind\tdigest\n");
        for e in &self.events {
            let node = e.node.map_or("-".to_string(), |n| n.0.to_string());
            let _ = writeln!(s, "{}\t{}\t{}\t{:016x}", e.time, node, e.kind, e.digest);
        }
        s
    }

    pub fn parse_tsv(text: &str) -> Option<Vec<TraceRow>> {
        let mut out = Vec::new();
        for line in text.lines().skip(1) {
            let mut f = line.split('\t');
            let time = f.next()?.parse().ok()?;
            let node = match f.next()? {
                "-" => None,
                n => Some(n.parse().ok()?),
            };
            let kind = f.next()?.to_string();
            let digest = u64::from_str_radix(f.next()?, 16).ok()?;
            out.push((time, node, kind, digest));
        }
        Some(out)
    }
}

#[derive(Debug, Clone)]
pub enum EventKind<M> {
    Deliver {
        from: NodeId,
        to: NodeId,
        msg: M,
        size: usize,
        sent_at: SimTime,
    },
    Timer {
        node: NodeId,
        tag: u64,
    },
    /// Driver-level event not tied to a node (client arrivals, probes).
    External {
        tag: u64,
    },
    Fault(FaultKind),
}

#[derive(Debug, Clone)]
pub struct SimEvent<M> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind<M>,
}

impl<M> PartialEq for SimEvent<M> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<M> Eq for SimEvent<M> {}

impl<M> PartialOrd for SimEvent<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for SimEvent<M> {
    // reversed so the max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

pub struct Sim<M> {
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<SimEvent<M>>,
    topology: Topology,
    clock: SkewedClock,
    link_free: FnvHashMap<(NodeId, NodeId), SimTime>,
    partitions: Vec<(BTreeSet<NodeId>, BTreeSet<NodeId>)>,
    crashed: BTreeSet<NodeId>,
    faults: Vec<FaultSpec>,
    trace: Trace,
    trace_messages: bool,
}

impl<M> Sim<M> {
    pub fn new(topology: Topology, clock: SkewedClock) -> Self {
        Sim {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            topology,
            clock,
            link_free: FnvHashMap::default(),
            partitions: Vec::new(),
            crashed: BTreeSet::new(),
            faults: Vec::new(),
            trace: Trace::default(),
            trace_messages: true,
        }
    }

    pub fn set_trace_messages(&mut self, on: bool) {
        self.trace_messages = on;
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn now_skewed(&self, node: NodeId) -> SimTime {
        self.clock.read(self.now, node)
    }

    pub fn clock(&self) -> &SkewedClock {
        &self.clock
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }

    pub fn record(&mut self, node: Option<NodeId>, kind: &'static str, digest: u64) {
        self.trace.push(self.now, node, kind, digest);
    }

    pub fn is_crashed(&self, n: NodeId) -> bool {
        self.crashed.contains(&n)
    }

    pub fn partitioned(&self, a: NodeId, b: NodeId) -> bool {
        self.partitions
            .iter()
            .any(|(x, y)| (x.contains(&a) && y.contains(&b)) || (x.contains(&b) && y.contains(&a)))
    }

    /// Membership oracle: both nodes up and no partition between them.
    pub fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        !self.is_crashed(a) && !self.is_crashed(b) && (a == b || !self.partitioned(a, b))
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|e| e.at)
    }

    fn push(&mut self, at: SimTime, kind: EventKind<M>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(SimEvent { at, seq, kind });
    }

    /// Schedules a message leaving `from` at `depart` (not before now).
    /// Returns the delivery time, or `None` when the sender is down.
    pub fn send_at(
        &mut self,
        depart: SimTime,
        from: NodeId,
        to: NodeId,
        msg: M,
        size: usize,
    ) -> Option<SimTime> {
        if self.is_crashed(from) {
            return None;
        }
        let depart = depart.max(self.now);
        let scope = self.topology.scope(from, to);
        let arrive = if scope == LinkScope::Local {
            depart
        } else {
            let transfer = to_sim(self.topology.transfer_time(scope, size));
            let free = self.link_free.entry((from, to)).or_insert(0);
            let start = depart.max(*free);
            *free = start + transfer;
            start + transfer + to_sim(self.topology.latency(scope))
        };
        if self.trace_messages {
            self.trace.push(
                depart,
                Some(from),
                "send",
                ((to.0 as u64) << 32) ^ size as u64,
            );
        }
        self.push(
            arrive,
            EventKind::Deliver {
                from,
                to,
                msg,
                size,
                sent_at: depart,
            },
        );
        Some(arrive)
    }

    pub fn send(&mut self, from: NodeId, to: NodeId, msg: M, size: usize) -> Option<SimTime> {
        self.send_at(self.now, from, to, msg, size)
    }

    pub fn schedule_timer(&mut self, node: NodeId, at: SimTime, tag: u64) {
        self.push(at.max(self.now), EventKind::Timer { node, tag });
    }

    pub fn schedule_external(&mut self, at: SimTime, tag: u64) {
        self.push(at.max(self.now), EventKind::External { tag });
    }

    pub fn schedule_fault(&mut self, spec: FaultSpec) -> Result<(), SimError> {
        if spec.at < self.now {
            return Err(SimError::InvalidFaultSequence(format!(
                "fault at {} is in the past",
                spec.at
            )));
        }
        let mut all = self.faults.clone();
        all.push(spec.clone());
        validate_faults(&all, self.topology.node_count())?;
        self.faults = all;
        self.push(spec.at, EventKind::Fault(spec.kind));
        Ok(())
    }

    fn apply_fault(&mut self, kind: &FaultKind) {
        match kind {
            FaultKind::Partition { side_a, side_b } => {
                self.partitions.push((side_a.clone(), side_b.clone()));
                self.record(None, "partition", side_a.len() as u64);
            }
            FaultKind::Heal => {
                self.partitions.clear();
                self.record(None, "heal", 0);
            }
            FaultKind::Crash(n) => {
                self.crashed.insert(*n);
                self.record(Some(*n), "crash", 0);
            }
            FaultKind::Recover(n) => {
                self.crashed.remove(n);
                self.record(Some(*n), "recover", 0);
            }
            FaultKind::Bandwidth(b) => {
                self.topology.set_cross_dc_bandwidth(*b);
                self.record(None, "bandwidth", *b as u64);
            }
        }
    }

    /// Pops the next live event, applying faults and silently dropping
    /// messages whose link is cut or whose receiver is down.
    pub fn next_event(&mut self) -> Option<SimEvent<M>> {
        while let Some(ev) = self.queue.pop() {
            debug_assert!(ev.at >= self.now);
            self.now = ev.at;
            match &ev.kind {
                EventKind::Deliver { from, to, size, .. } => {
                    if !self.reachable(*from, *to) {
                        if self.trace_messages {
                            self.record(Some(*to), "drop", ((from.0 as u64) << 32) ^ *size as u64);
                        }
                        continue;
                    }
                    if self.trace_messages {
                        self.record(Some(*to), "deliver", ((from.0 as u64) << 32) ^ *size as u64);
                    }
                }
                EventKind::Timer { node, .. } => {
                    if self.is_crashed(*node) {
                        continue;
                    }
                }
                EventKind::External { .. } => {}
                EventKind::Fault(kind) => {
                    let kind = kind.clone();
                    self.apply_fault(&kind);
                }
            }
            return Some(ev);
        }
        None
    }

    /// Dispatches every event up to and including `t`, then advances the
    /// clock to `t`.
    pub fn run_until(&mut self, t: SimTime, mut handler: impl FnMut(&mut Sim<M>, SimEvent<M>)) {
        while self.next_event_time().is_some_and(|at| at <= t) {
            match self.next_event() {
                Some(ev) => handler(self, ev),
                None => break,
            }
        }
        self.now = self.now.max(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sim(eps: Duration) -> Sim<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let topo = Topology::two_dc();
        let clock = SkewedClock::new(topo.node_count(), eps, &mut rng);
        Sim::new(topo, clock)
    }

    #[test]
    fn same_rack_small_message_arrives_after_base_latency() {
        let mut s = sim(Duration::ZERO);
        let at = s.send(NodeId(0), NodeId(1), 1, 0).unwrap();
        assert_eq!(at, 100_000);
    }

    #[test]
    fn partitioned_messages_are_dropped() {
        let mut s = sim(Duration::ZERO);
        s.schedule_fault(FaultSpec {
            at: 0,
            kind: FaultKind::Partition {
                side_a: [NodeId(0)].into(),
                side_b: [NodeId(9)].into(),
            },
        })
        .unwrap();
        s.send(NodeId(0), NodeId(9), 5, 10);
        let mut got = Vec::new();
        s.run_until(1_000_000_000, |_, ev| got.push(ev));
        assert!(got
            .iter()
            .all(|e| !matches!(e.kind, EventKind::Deliver { .. })));
    }

    #[test]
    fn empty_queue_advances_clock_only() {
        let mut s = sim(Duration::ZERO);
        let before = s.trace().len();
        s.run_until(5_000, |_, _| panic!("no events"));
        assert_eq!(s.now(), 5_000);
        assert_eq!(s.trace().len(), before);
    }

    #[test]
    fn events_pop_in_time_then_insertion_order() {
        let mut s = sim(Duration::ZERO);
        s.schedule_timer(NodeId(0), 10, 1);
        s.schedule_timer(NodeId(0), 5, 2);
        s.schedule_timer(NodeId(0), 10, 3);
        let mut tags = Vec::new();
        s.run_until(100, |_, ev| {
            if let EventKind::Timer { tag, .. } = ev.kind {
                tags.push(tag)
            }
        });
        assert_eq!(tags, vec![2, 1, 3]);
    }

    #[test]
    fn link_is_fifo_under_bandwidth() {
        let mut s = sim(Duration::ZERO);
        s.schedule_fault(FaultSpec {
            at: 0,
            kind: FaultKind::Bandwidth(MBPS),
        })
        .unwrap();
        s.run_until(0, |_, _| {});
        let a = s.send(NodeId(0), NodeId(9), 1, 125_000).unwrap();
        let b = s.send(NodeId(0), NodeId(9), 2, 0).unwrap();
        assert_eq!(a, 1_000_000_000 + 10_000_000);
        assert!(b >= a);
    }

    #[test]
    fn skew_is_bounded_and_seeded() {
        let s1 = sim(Duration::from_millis(1));
        let s2 = sim(Duration::from_millis(1));
        for n in s1.topology().nodes() {
            assert!(s1.clock().offset(n).abs() <= 1_000_000);
            assert_eq!(s1.clock().offset(n), s2.clock().offset(n));
        }
        let z = sim(Duration::ZERO);
        assert_eq!(z.now_skewed(NodeId(3)), z.now());
    }

    #[test]
    fn fault_sequence_validation() {
        let heal = FaultSpec {
            at: 5,
            kind: FaultKind::Heal,
        };
        assert!(validate_faults(std::slice::from_ref(&heal), 4).is_err());
        let rec = FaultSpec {
            at: 5,
            kind: FaultKind::Recover(NodeId(1)),
        };
        assert!(validate_faults(std::slice::from_ref(&rec), 4).is_err());
        let crash = FaultSpec {
            at: 1,
            kind: FaultKind::Crash(NodeId(1)),
        };
        assert!(validate_faults(&[crash, rec], 4).is_ok());
    }
}
