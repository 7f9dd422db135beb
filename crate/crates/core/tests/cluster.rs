// SPDX-License-Identifier: Apache-2.0

use std::time::Duration;

use latbound_core::model::{
    DataUnitRef, LatencyBound, OpId, ReadRequest, ValidWrite, ValidatedRequest, WritePayload,
};
use latbound_core::replication::{Cluster, OpResult, ReplicationConfig, StreamOp};
use latbound_core::simnet::Topology;

fn unit(key: &str) -> DataUnitRef {
    DataUnitRef::new("t", key.as_bytes(), "cf", "c")
}

fn write(id: u64, key: &str, val: &str, bound: LatencyBound) -> StreamOp {
    StreamOp::new(ValidatedRequest::Write(ValidWrite {
        id: OpId(id),
        target: unit(key),
        payload: WritePayload::put("c", val),
        ordered: true,
        t_bound: bound,
    }))
}

fn read(id: u64, key: &str, bound: LatencyBound) -> StreamOp {
    StreamOp::new(ValidatedRequest::Read(ReadRequest {
        id: OpId(id),
        target: unit(key),
        t_bound: bound,
    }))
}

#[test]
fn consistent_write_then_read() {
    let mut c = Cluster::new(Topology::two_dc(), ReplicationConfig::default()).unwrap();
    c.add_stream(
        vec![
            write(1, "k", "v1", LatencyBound::Infinite),
            read(2, "k", LatencyBound::Infinite),
        ],
        0,
    );
    c.run();
    c.final_check();
    let out = c.outcomes();
    assert_eq!(out.len(), 2, "{out:?}");
    assert_eq!(out[0].result, OpResult::Ack);
    assert_eq!(out[1].result, OpResult::Value(b"v1".to_vec()));
    assert!(
        c.oracle().violations().is_empty(),
        "{:?}",
        c.oracle().violations()
    );
}

#[test]
fn mixed_bounds_many_streams() {
    let mut c = Cluster::new(Topology::two_dc(), ReplicationConfig::default()).unwrap();
    let mut id = 0;
    for s in 0..8 {
        let mut ops = Vec::new();
        for i in 0..50 {
            id += 1;
            let key = format!("k{}", (s * 7 + i) % 20);
            let b = match i % 4 {
                0 => LatencyBound::millis(1),
                1 => LatencyBound::millis(20),
                2 => LatencyBound::millis(200),
                _ => LatencyBound::Infinite,
            };
            if i % 3 == 0 {
                ops.push(read(id, &key, b));
            } else {
                ops.push(write(id, &key, &format!("v{id}"), b));
            }
        }
        c.add_stream(ops, 0);
    }
    c.run();
    let t = c.now();
    c.run_until(t + 2_000_000_000);
    c.final_check();
    assert_eq!(c.outcomes().len(), 400);
    let over = c
        .outcomes()
        .iter()
        .filter(|o| o.overshoot().is_some_and(|d| d > Duration::from_millis(5)))
        .count();
    eprintln!("overshoots {over} stats {:?}", c.stats());
    assert!(
        c.oracle().violations().is_empty(),
        "{:?}",
        &c.oracle().violations()[..3.min(c.oracle().violations().len())]
    );
}

fn busy_streams(c: &mut Cluster, streams: usize, per: usize, keys: usize) {
    let mut id = 10_000;
    for s in 0..streams {
        let mut ops = Vec::new();
        for i in 0..per {
            id += 1;
            let key = format!("k{}", (s * 13 + i) % keys);
            let b = match i % 5 {
                0 => LatencyBound::millis(0),
                1 => LatencyBound::millis(15),
                2 => LatencyBound::millis(60),
                3 => LatencyBound::Infinite,
                _ => LatencyBound::millis(150),
            };
            if i % 4 == 0 {
                ops.push(read(id, &key, b));
            } else {
                ops.push(write(id, &key, &format!("v{id}"), b));
            }
        }
        c.add_stream(ops, 0);
    }
}

#[test]
fn partition_and_heal_stay_safe() {
    use latbound_core::model::NodeId;
    use latbound_core::simnet::{FaultKind, FaultSpec};
    let mut c = Cluster::new(Topology::two_dc(), ReplicationConfig::default()).unwrap();
    let dc1 = (0..9).map(NodeId).collect();
    let dc2 = (9..18).map(NodeId).collect();
    c.schedule_fault(FaultSpec {
        at: 30_000_000,
        kind: FaultKind::Partition {
            side_a: dc1,
            side_b: dc2,
        },
    })
    .unwrap();
    c.schedule_fault(FaultSpec {
        at: 400_000_000,
        kind: FaultKind::Heal,
    })
    .unwrap();
    busy_streams(&mut c, 12, 120, 30);
    c.run();
    let t = c.now();
    c.run_until(t + 3_000_000_000);
    c.final_check();
    eprintln!("{:?}", c.stats());
    let v = c.oracle().violations();
    assert!(
        v.is_empty(),
        "{} violations, first {:?}",
        v.len(),
        &v[..v.len().min(5)]
    );
}

#[test]
fn crash_and_recover_stay_safe() {
    use latbound_core::model::NodeId;
    use latbound_core::simnet::{FaultKind, FaultSpec};
    let mut c = Cluster::new(Topology::two_dc(), ReplicationConfig::default()).unwrap();
    for (at, n) in [(20_000_000, 3u32), (50_000_000, 11)] {
        c.schedule_fault(FaultSpec {
            at,
            kind: FaultKind::Crash(NodeId(n)),
        })
        .unwrap();
    }
    for (at, n) in [(300_000_000, 3u32), (500_000_000, 11)] {
        c.schedule_fault(FaultSpec {
            at,
            kind: FaultKind::Recover(NodeId(n)),
        })
        .unwrap();
    }
    busy_streams(&mut c, 12, 120, 30);
    c.run();
    let t = c.now();
    c.run_until(t + 3_000_000_000);
    c.final_check();
    eprintln!("{:?}", c.stats());
    let v = c.oracle().violations();
    assert!(
        v.is_empty(),
        "{} violations, first {:?}",
        v.len(),
        &v[..v.len().min(5)]
    );
}

#[test]
fn minority_write_takes_local_path_and_converges_after_heal() {
    use latbound_core::model::{NodeId, Stage};
    use latbound_core::simnet::{FaultKind, FaultSpec};
    let topo = Topology::two_dc();
    let mut c = Cluster::new(topo.clone(), ReplicationConfig::default()).unwrap();
    let (key, far) = (0..200)
        .map(|i| format!("key{i}"))
        .find_map(|k| {
            let reps = c.env().replicas(c.env().tablet_of(&unit(&k))).to_vec();
            let home = topo.location(reps[0]).dc;
            reps.iter()
                .copied()
                .find(|&p| topo.location(p).dc != home)
                .map(|p| (k, p))
        })
        .expect("some tablet spans both datacenters");
    let dc1 = (0..9).map(NodeId).collect();
    let dc2 = (9..18).map(NodeId).collect();
    c.schedule_fault(FaultSpec {
        at: 1_000_000,
        kind: FaultKind::Partition {
            side_a: dc1,
            side_b: dc2,
        },
    })
    .unwrap();
    c.schedule_fault(FaultSpec {
        at: 200_000_000,
        kind: FaultKind::Heal,
    })
    .unwrap();
    let mut w = write(1, &key, "far", LatencyBound::millis(50));
    w.entry = Some(far);
    w.delay = Duration::from_millis(5);
    let s = c.add_stream(vec![w], 0);
    c.run();
    let ack = &c.outcomes()[0];
    assert_eq!(ack.result, OpResult::Ack);
    assert_eq!(
        ack.stages.iter().copied().collect::<Vec<_>>(),
        vec![Stage::Reception]
    );
    assert_eq!(c.stats().partition_acks, 1);
    c.run_until(1_500_000_000);
    let mut r = read(2, &key, LatencyBound::Infinite);
    r.delay = Duration::ZERO;
    c.extend_stream(s, vec![r]).unwrap();
    c.run();
    c.final_check();
    assert_eq!(c.outcomes()[1].result, OpResult::Value(b"far".to_vec()));
    assert!(
        c.oracle().violations().is_empty(),
        "{:?}",
        c.oracle().violations()
    );
}
