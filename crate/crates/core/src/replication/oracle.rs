// SPDX-License-Identifier: Apache-2.0

//! Omniscient safety checks over a simulation run.
//!
//! The oracle sees every sequence assignment, execution, acknowledgement
//! and consistent read, and records a violation whenever one of these
//! breaks: replicas execute a prefix of one per-tablet order; acked writes
//! sit on a quorum; consistent reads see every ordered write acked before
//! they arrived; an origin's ordered writes are sequenced in origin order;
//! a replica's executed state equals a replay of the order it claims.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::model::{DataUnitRef, NodeId, OpId, TabletId, WritePayload, WriteRecord};
use crate::simnet::SimTime;
use crate::storage::ReplicaStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    DoubleAssignment,
    Prefix,
    Durability,
    ReadYourWrites,
    OriginOrder,
    ReplayMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub time: SimTime,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}ns: {}", self.kind, self.time, self.detail)
    }
}

#[derive(Debug, Default)]
pub struct Oracle {
    /// Per tablet, record `s` at index `s - 1`.
    assigned: HashMap<TabletId, Vec<WriteRecord>>,
    seq_of: HashMap<OpId, u64>,
    executed: HashMap<(NodeId, TabletId), u64>,
    origin_last: HashMap<(TabletId, NodeId), u64>,
    acked_ordered: HashMap<DataUnitRef, Vec<(SimTime, OpId)>>,
    writer_of: HashMap<(DataUnitRef, Vec<u8>), OpId>,
    violations: Vec<Violation>,
    checks: u64,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// Number of individual checks performed.
    pub fn checks(&self) -> u64 {
        self.checks
    }

    fn flag(&mut self, kind: ViolationKind, time: SimTime, detail: String) {
        self.violations.push(Violation { kind, time, detail });
    }

    pub fn assigned(&self, tablet: TabletId) -> &[WriteRecord] {
        self.assigned.get(&tablet).map_or(&[], |v| v.as_slice())
    }

    pub fn on_assign(&mut self, time: SimTime, tablet: TabletId, s: u64, w: &WriteRecord) {
        self.checks += 1;
        let order = self.assigned.entry(tablet).or_default();
        let idx = (s - 1) as usize;
        if idx < order.len() {
            if order[idx].id != w.id {
                let prev = order[idx].id;
                self.flag(
                    ViolationKind::DoubleAssignment,
                    time,
                    format!("{tablet} seq {s} holds {prev} and {}", w.id),
                );
            }
            return;
        }
        if idx != order.len() {
            let len = order.len();
            self.flag(
                ViolationKind::DoubleAssignment,
                time,
                format!("{tablet} seq {s} assigned with only {len} before it"),
            );
            return;
        }
        order.push(w.clone());
        self.seq_of.insert(w.id, s);
        if let WritePayload::Put { columns } = &w.payload {
            for (col, v) in columns {
                let unit = DataUnitRef {
                    column: col.clone(),
                    ..w.target.clone()
                };
                self.writer_of.insert((unit, v.clone()), w.id);
            }
        }
        if w.ordered {
            if let Some(i) = w.order_index {
                let last = self.origin_last.entry((tablet, w.origin)).or_insert(0);
                if i <= *last {
                    let l = *last;
                    self.flag(
                        ViolationKind::OriginOrder,
                        time,
                        format!("{tablet} origin {} index {i} after {l}", w.origin),
                    );
                } else {
                    *last = i;
                }
            }
        }
    }

    pub fn on_execute(&mut self, time: SimTime, node: NodeId, tablet: TabletId, s: u64, id: OpId) {
        self.checks += 1;
        let last = self.executed.entry((node, tablet)).or_insert(0);
        let expected = *last + 1;
        *last = s;
        if s != expected {
            self.flag(
                ViolationKind::Prefix,
                time,
                format!("{node} {tablet} executed seq {s}, expected {expected}"),
            );
            return;
        }
        let global = self
            .assigned
            .get(&tablet)
            .and_then(|o| o.get((s - 1) as usize));
        match global {
            Some(g) if g.id == id => {}
            other => {
                let g = other
                    .map(|g| g.id.to_string())
                    .unwrap_or_else(|| "nothing".into());
                self.flag(
                    ViolationKind::Prefix,
                    time,
                    format!("{node} {tablet} executed {id} at seq {s}, order has {g}"),
                );
            }
        }
    }

    /// A replica replaced its executed state with a copy.
    pub fn on_install(&mut self, time: SimTime, node: NodeId, tablet: TabletId, executed: u64) {
        self.checks += 1;
        let known = self.assigned(tablet).len() as u64;
        if executed > known {
            self.flag(
                ViolationKind::Prefix,
                time,
                format!("{node} {tablet} installed seq {executed} beyond order length {known}"),
            );
        }
        self.executed.insert((node, tablet), executed);
    }

    /// An acknowledged write must be held by `needed` replicas.
    pub fn on_write_ack(&mut self, time: SimTime, w: &WriteRecord, holders: usize, needed: usize) {
        self.checks += 1;
        if holders < needed {
            self.flag(
                ViolationKind::Durability,
                time,
                format!("{} acked on {holders} replicas, {needed} needed", w.id),
            );
        }
        if w.ordered && needed > 1 {
            for unit in w.written_units() {
                self.acked_ordered
                    .entry(unit)
                    .or_default()
                    .push((time, w.id));
            }
        }
    }

    /// A consistent read of `unit` that arrived at `arrival` returned `value`.
    pub fn on_consistent_read(
        &mut self,
        time: SimTime,
        arrival: SimTime,
        unit: &DataUnitRef,
        value: Option<&[u8]>,
    ) {
        self.checks += 1;
        let Some(acked) = self.acked_ordered.get(unit) else {
            return;
        };
        let mut need = 0u64;
        for (t, id) in acked {
            if *t > arrival {
                continue;
            }
            match self.seq_of.get(id) {
                Some(&s) => need = need.max(s),
                None => {
                    let id = *id;
                    self.flag(
                        ViolationKind::ReadYourWrites,
                        time,
                        format!("{id} acked before a consistent read but never sequenced"),
                    );
                    return;
                }
            }
        }
        if need == 0 {
            return;
        }
        let Some(v) = value else {
            self.flag(
                ViolationKind::ReadYourWrites,
                time,
                format!("consistent read returned nothing, seq {need} acked before it"),
            );
            return;
        };
        let Some(writer) = self.writer_of.get(&(unit.clone(), v.to_vec())) else {
            return;
        };
        let got = self.seq_of.get(writer).copied().unwrap_or(0);
        if got < need {
            self.flag(
                ViolationKind::ReadYourWrites,
                time,
                format!("consistent read saw seq {got}, seq {need} acked before it"),
            );
        }
    }

    /// Compares a replica's readable state with a replay of the order up
    /// to its executed sequence, and with a donor at the same point.
    pub fn check_replica(
        &mut self,
        time: SimTime,
        node: NodeId,
        store: &ReplicaStore,
        donor: Option<&ReplicaStore>,
    ) {
        self.checks += 1;
        let tablet = store.tablet();
        let upto = store.executed_seq() as usize;
        let order = self.assigned(tablet);
        if upto > order.len() {
            let len = order.len();
            self.flag(
                ViolationKind::ReplayMismatch,
                time,
                format!("{node} {tablet} executed {upto} of an order of {len}"),
            );
            return;
        }
        let prefix: Vec<(u64, WriteRecord)> = order[..upto]
            .iter()
            .enumerate()
            .map(|(i, w)| (i as u64 + 1, w.clone()))
            .collect();
        let units: BTreeSet<DataUnitRef> =
            prefix.iter().flat_map(|(_, w)| w.written_units()).collect();
        let mut replay = ReplicaStore::in_memory(tablet);
        replay
            .plist_insert(prefix, false)
            .expect("a fresh store accepts a contiguous prefix");
        replay.execute_writes(upto, 0);
        let donor = donor.filter(|d| d.executed_seq() == store.executed_seq());
        for u in &units {
            let mine = store.acquire(u).value;
            if mine != replay.acquire(u).value {
                self.flag(
                    ViolationKind::ReplayMismatch,
                    time,
                    format!("{node} {tablet} differs from replay at {u:?}"),
                );
                return;
            }
            if let Some(d) = donor {
                if mine != d.acquire(u).value {
                    self.flag(
                        ViolationKind::ReplayMismatch,
                        time,
                        format!("{node} {tablet} differs from its donor at {u:?}"),
                    );
                    return;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatencyBound;

    fn w(id: u64, val: &str) -> WriteRecord {
        WriteRecord {
            id: OpId(id),
            target: DataUnitRef::new("t", b"k".as_slice(), "cf", "c"),
            payload: WritePayload::put("c", val),
            timestamp: id,
            origin_seq: id,
            order_index: Some(id),
            prev_ordered: None,
            ordered: true,
            t_bound: LatencyBound::Infinite,
            origin: NodeId(0),
        }
    }

    #[test]
    fn prefix_violation_detected() {
        let mut o = Oracle::new();
        let t = TabletId(1);
        o.on_assign(0, t, 1, &w(1, "a"));
        o.on_assign(0, t, 2, &w(2, "b"));
        o.on_execute(1, NodeId(0), t, 1, OpId(1));
        assert!(o.violations().is_empty());
        o.on_execute(2, NodeId(1), t, 1, OpId(2));
        assert_eq!(o.violations()[0].kind, ViolationKind::Prefix);
    }

    #[test]
    fn double_assignment_detected() {
        let mut o = Oracle::new();
        let t = TabletId(1);
        o.on_assign(0, t, 1, &w(1, "a"));
        o.on_assign(0, t, 1, &w(1, "a"));
        assert!(o.violations().is_empty());
        o.on_assign(0, t, 1, &w(2, "b"));
        assert_eq!(o.violations()[0].kind, ViolationKind::DoubleAssignment);
    }

    #[test]
    fn stale_consistent_read_detected() {
        let mut o = Oracle::new();
        let t = TabletId(1);
        let (a, b) = (w(1, "a"), w(2, "b"));
        o.on_assign(0, t, 1, &a);
        o.on_assign(0, t, 2, &b);
        o.on_write_ack(5, &a, 2, 2);
        o.on_write_ack(6, &b, 2, 2);
        let unit = a.target.clone();
        o.on_consistent_read(20, 10, &unit, Some(b"b"));
        assert!(o.violations().is_empty());
        o.on_consistent_read(20, 10, &unit, Some(b"a"));
        assert_eq!(o.violations()[0].kind, ViolationKind::ReadYourWrites);
    }

    #[test]
    fn replay_matches_executed_store() {
        let mut o = Oracle::new();
        let t = TabletId(1);
        let mut store = ReplicaStore::in_memory(t);
        let recs = vec![(1, w(1, "a")), (2, w(2, "b"))];
        for (s, r) in &recs {
            o.on_assign(0, t, *s, r);
        }
        store.plist_insert(recs, false).unwrap();
        store.execute_writes(1, 0);
        o.check_replica(1, NodeId(0), &store, None);
        assert!(o.violations().is_empty(), "{:?}", o.violations());
    }
}
