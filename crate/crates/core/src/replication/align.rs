// SPDX-License-Identifier: Apache-2.0

//! Leader-side alignment of a coordination round.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{NodeId, OpId, WriteRecord};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Aligned {
    /// Writes to sequence, in order.
    pub order: Vec<WriteRecord>,
    /// Ordered writes whose predecessor is not sequenced yet.
    pub held: Vec<OpId>,
}

/// Orders contributions by timestamp. Equal timestamps from different
/// origins are ordered by a per-round random rank drawn from `seed`; one
/// origin's writes keep their origin order. Duplicates and writes already
/// sequenced (`done`) are dropped. An ordered write waits until the write
/// named by its `prev_ordered` has been sequenced, either earlier
/// (`order_done`) or earlier in this round.
pub fn align(
    contributions: Vec<WriteRecord>,
    seed: u64,
    done: impl Fn(OpId) -> bool,
    order_done: impl Fn(NodeId, u64) -> bool,
) -> Aligned {
    let mut seen = HashSet::new();
    let mut ws: Vec<WriteRecord> = contributions
        .into_iter()
        .filter(|w| !done(w.id) && seen.insert(w.id))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut origins: Vec<NodeId> = ws.iter().map(|w| w.origin).collect();
    origins.sort();
    origins.dedup();
    let rank: HashMap<NodeId, u64> = origins.into_iter().map(|o| (o, rng.random())).collect();
    ws.sort_by_key(|w| (w.timestamp, rank[&w.origin], w.origin, w.origin_seq));

    let mut out = Aligned::default();
    let mut now_done: HashSet<(NodeId, u64)> = HashSet::new();
    for w in ws {
        let blocked = w.ordered
            && w.prev_ordered
                .is_some_and(|p| !order_done(w.origin, p) && !now_done.contains(&(w.origin, p)));
        if blocked {
            out.held.push(w.id);
            continue;
        }
        if let Some(i) = w.order_index {
            now_done.insert((w.origin, i));
        }
        out.order.push(w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataUnitRef, LatencyBound, WritePayload};

    fn w(id: u64, origin: u32, ts: u64) -> WriteRecord {
        WriteRecord {
            id: OpId(id),
            target: DataUnitRef::new("t", b"k".as_slice(), "cf", "c"),
            payload: WritePayload::put("c", "v"),
            timestamp: ts,
            origin_seq: id,
            order_index: None,
            prev_ordered: None,
            ordered: false,
            t_bound: LatencyBound::Infinite,
            origin: NodeId(origin),
        }
    }

    fn ids(a: &Aligned) -> Vec<u64> {
        a.order.iter().map(|w| w.id.0).collect()
    }

    #[test]
    fn timestamp_order() {
        let a = align(vec![w(1, 0, 5), w(2, 1, 3)], 1, |_| false, |_, _| false);
        assert_eq!(ids(&a), vec![2, 1]);
    }

    #[test]
    fn ties_are_seeded() {
        let input: Vec<_> = (0..8).map(|i| w(i, i as u32, 7)).collect();
        let a = align(input.clone(), 42, |_| false, |_, _| false);
        let b = align(input.clone(), 42, |_| false, |_, _| false);
        assert_eq!(ids(&a), ids(&b));
        let differs =
            (0..20).any(|s| ids(&align(input.clone(), s, |_| false, |_, _| false)) != ids(&a));
        assert!(differs);
    }

    #[test]
    fn one_origin_keeps_its_order_on_ties() {
        let input = vec![w(3, 0, 7), w(1, 0, 7), w(2, 0, 7)];
        let a = align(input, 9, |_| false, |_, _| false);
        assert_eq!(ids(&a), vec![1, 2, 3]);
    }

    #[test]
    fn duplicates_and_sequenced_are_dropped() {
        let a = align(
            vec![w(1, 0, 1), w(1, 0, 1), w(2, 0, 2)],
            0,
            |id| id == OpId(2),
            |_, _| false,
        );
        assert_eq!(ids(&a), vec![1]);
    }

    #[test]
    fn hold_back_until_predecessor() {
        let mut w2 = w(2, 0, 2);
        w2.ordered = true;
        w2.order_index = Some(2);
        w2.prev_ordered = Some(1);
        let a = align(vec![w2.clone()], 0, |_| false, |_, _| false);
        assert!(a.order.is_empty());
        assert_eq!(a.held, vec![OpId(2)]);
        let a = align(
            vec![w2.clone()],
            0,
            |_| false,
            |o, i| o == NodeId(0) && i == 1,
        );
        assert_eq!(ids(&a), vec![2]);
        let mut w1 = w(1, 0, 1);
        w1.ordered = true;
        w1.order_index = Some(1);
        let a = align(vec![w2, w1], 0, |_| false, |_, _| false);
        assert_eq!(ids(&a), vec![1, 2]);
    }
}
