// SPDX-License-Identifier: Apache-2.0

//! A simulated cluster: one engine per node, closed-loop client streams,
//! faults, and the oracle watching everything.
//!
//! Clients sit in the rack of the node they talk to. A stream issues its
//! next operation when the previous response reaches it. By default a
//! request goes to the tablet's owning replica, or to the first live
//! replica when the owner is down.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::engine::{Ctx, Effect, EngineStats, Env, NodeEngine};
use super::messages::{request_size, response_size, Message};
use super::oracle::Oracle;
use super::{ReplicationConfig, ReplicationError};
use crate::model::{
    quorum_size, LatencyBound, LinkScope, ModelError, NodeId, OpId, ResponseKind, Stage,
    ValidatedRequest,
};
use crate::simnet::{
    from_sim, to_sim, EventKind, FaultKind, FaultSpec, Sim, SimError, SimEvent, SimTime,
    SkewedClock, Topology, Trace,
};
use crate::storage::ReplicaStore;

const ISSUE: u64 = 1 << 60;
const ARRIVE: u64 = 2 << 60;
const LOW: u64 = (1 << 60) - 1;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("stream {0} does not exist")]
    UnknownStream(usize),
}

/// One operation of a client stream.
#[derive(Debug, Clone)]
pub struct StreamOp {
    pub req: ValidatedRequest,
    /// Node the client talks to; `None` routes to the owning replica.
    pub entry: Option<NodeId>,
    /// Client think time before issuing.
    pub delay: Duration,
}

impl StreamOp {
    pub fn new(req: ValidatedRequest) -> Self {
        StreamOp {
            req,
            entry: None,
            delay: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpResult {
    Ack,
    Value(Vec<u8>),
    Null,
    Failed(ReplicationError),
}

#[derive(Debug, Clone)]
pub struct OpOutcome {
    pub op: OpId,
    pub stream: usize,
    pub node: NodeId,
    pub is_write: bool,
    pub bound: LatencyBound,
    pub issued: SimTime,
    /// Arrival at the entry node; the bound runs from here.
    pub arrival: SimTime,
    /// Response received by the client.
    pub done: SimTime,
    pub latency: Duration,
    pub result: OpResult,
    pub stages: BTreeSet<Stage>,
}

impl OpOutcome {
    /// Latency exceeded a finite bound.
    pub fn overshoot(&self) -> Option<Duration> {
        match self.bound {
            LatencyBound::Finite(b) if self.latency > b => Some(self.latency - b),
            _ => None,
        }
    }
}

#[derive(Debug)]
struct Stream {
    ops: VecDeque<StreamOp>,
    busy: bool,
}

#[derive(Debug, Clone)]
struct InFlight {
    stream: usize,
    node: NodeId,
    issued: SimTime,
    arrival: SimTime,
    is_write: bool,
    bound: LatencyBound,
}

pub struct Cluster {
    sim: Sim<Message>,
    env: Env,
    engines: Vec<NodeEngine>,
    oracle: Oracle,
    streams: Vec<Stream>,
    inflight: BTreeMap<OpId, InFlight>,
    arriving: BTreeMap<u64, (OpId, NodeId, ValidatedRequest)>,
    next_arrival: u64,
    outcomes: Vec<OpOutcome>,
    effects: Vec<Effect>,
    /// Runs stop here even if streams are unfinished.
    pub horizon: SimTime,
}

impl Cluster {
    pub fn new(topology: Topology, config: ReplicationConfig) -> Result<Self, ClusterError> {
        let env = Env::new(config, &topology)?;
        let mut rng = ChaCha8Rng::seed_from_u64(env.config.seed);
        let clock = SkewedClock::new(topology.node_count(), env.config.skew, &mut rng);
        let engines: Vec<NodeEngine> = topology
            .nodes()
            .map(|n| NodeEngine::new(n, &env, &topology))
            .collect();
        let mut sim = Sim::new(topology, clock);
        sim.set_trace_messages(env.config.trace_messages);
        let mut c = Cluster {
            sim,
            env,
            engines,
            oracle: Oracle::new(),
            streams: Vec::new(),
            inflight: BTreeMap::new(),
            arriving: BTreeMap::new(),
            next_arrival: 0,
            outcomes: Vec::new(),
            effects: Vec::new(),
            horizon: to_sim(Duration::from_secs(3600)),
        };
        for i in 0..c.engines.len() {
            let mut ctx = Ctx {
                sim: &mut c.sim,
                env: &c.env,
                effects: &mut c.effects,
            };
            c.engines[i].start(&mut ctx);
        }
        Ok(c)
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn sim(&self) -> &Sim<Message> {
        &self.sim
    }

    pub fn trace(&self) -> &Trace {
        self.sim.trace()
    }

    /// Drops trace events recorded so far, e.g. after a warm-up.
    pub fn clear_trace(&mut self) {
        *self.sim.trace_mut() = Trace::default();
    }

    pub fn now(&self) -> SimTime {
        self.sim.now()
    }

    pub fn engines(&self) -> &[NodeEngine] {
        &self.engines
    }

    pub fn engine(&self, n: NodeId) -> &NodeEngine {
        &self.engines[n.0 as usize]
    }

    pub fn engine_mut(&mut self, n: NodeId) -> &mut NodeEngine {
        &mut self.engines[n.0 as usize]
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn outcomes(&self) -> &[OpOutcome] {
        &self.outcomes
    }

    pub fn take_outcomes(&mut self) -> Vec<OpOutcome> {
        std::mem::take(&mut self.outcomes)
    }

    /// Sum of all engines' counters.
    pub fn stats(&self) -> EngineStats {
        let mut t = EngineStats::default();
        for e in &self.engines {
            let s = e.stats();
            for (a, b) in t.busy_by_step.iter_mut().zip(s.busy_by_step) {
                *a += b;
            }
            t.busy_write_ops += s.busy_write_ops;
            t.busy_read_ops += s.busy_read_ops;
            t.plans += s.plans;
            t.rounds_led += s.rounds_led;
            t.rounds_done += s.rounds_done;
            t.fallbacks += s.fallbacks;
            t.catch_ups += s.catch_ups;
            t.partition_acks += s.partition_acks;
            t.nulls += s.nulls;
        }
        t
    }

    pub fn schedule_fault(&mut self, spec: FaultSpec) -> Result<(), ClusterError> {
        self.sim.schedule_fault(spec)?;
        Ok(())
    }

    /// Adds a closed-loop stream whose first operation is issued at `start`.
    pub fn add_stream(&mut self, ops: Vec<StreamOp>, start: SimTime) -> usize {
        let idx = self.streams.len();
        let first_delay = ops.first().map_or(0, |o| to_sim(o.delay));
        self.streams.push(Stream {
            ops: ops.into(),
            busy: false,
        });
        self.sim
            .schedule_external(start + first_delay, ISSUE | idx as u64);
        idx
    }

    /// Appends operations to an existing stream; an idle stream restarts now.
    pub fn extend_stream(&mut self, idx: usize, ops: Vec<StreamOp>) -> Result<(), ClusterError> {
        let s = self
            .streams
            .get_mut(idx)
            .ok_or(ClusterError::UnknownStream(idx))?;
        let restart = !s.busy && s.ops.is_empty();
        let delay = ops.first().map_or(0, |o| to_sim(o.delay));
        s.ops.extend(ops);
        if restart {
            let at = self.sim.now() + delay;
            self.sim.schedule_external(at, ISSUE | idx as u64);
        }
        Ok(())
    }

    /// No operation is queued, issued or in flight.
    pub fn quiet(&self) -> bool {
        self.inflight.is_empty()
            && self.arriving.is_empty()
            && self.streams.iter().all(|s| !s.busy && s.ops.is_empty())
    }

    /// Runs until every stream finished, or the horizon.
    pub fn run(&mut self) {
        while !self.quiet() {
            match self.sim.next_event_time() {
                Some(t) if t <= self.horizon => {}
                _ => break,
            }
            let Some(ev) = self.sim.next_event() else {
                break;
            };
            self.dispatch(ev);
        }
    }

    /// Runs every event up to `t`, streams or not.
    pub fn run_until(&mut self, t: SimTime) {
        while self.sim.next_event_time().is_some_and(|at| at <= t) {
            let Some(ev) = self.sim.next_event() else {
                break;
            };
            self.dispatch(ev);
        }
    }

    /// Replays every replica against the global order.
    pub fn final_check(&mut self) {
        let now = self.sim.now();
        for e in &self.engines {
            for store in e.stores().values() {
                self.oracle.check_replica(now, e.id(), store, None);
            }
        }
    }

    fn route(&self, req: &ValidatedRequest) -> NodeId {
        let tablet = self.env.tablet_of(req.target());
        let reps = self.env.replicas(tablet);
        reps.iter()
            .copied()
            .find(|&p| !self.sim.is_crashed(p))
            .unwrap_or(reps[0])
    }

    fn with_engine(&mut self, n: NodeId, f: impl FnOnce(&mut NodeEngine, &mut Ctx)) {
        let mut ctx = Ctx {
            sim: &mut self.sim,
            env: &self.env,
            effects: &mut self.effects,
        };
        f(&mut self.engines[n.0 as usize], &mut ctx);
    }

    fn dispatch(&mut self, ev: SimEvent<Message>) {
        match ev.kind {
            EventKind::Deliver {
                from,
                to,
                msg,
                size,
                sent_at,
            } => self.with_engine(to, |e, ctx| e.on_message(ctx, from, msg, size, sent_at)),
            EventKind::Timer { node, tag } => self.with_engine(node, |e, ctx| e.on_timer(ctx, tag)),
            EventKind::External { tag } if tag & ARRIVE == ARRIVE => self.arrive(tag & LOW),
            EventKind::External { tag } => self.issue((tag & LOW) as usize),
            EventKind::Fault(FaultKind::Crash(n)) => {
                let lost = self.engines[n.0 as usize].on_crash();
                let now = self.sim.now();
                for op in lost {
                    self.complete(op, now, Err(ReplicationError::Lost), BTreeSet::new());
                }
            }
            EventKind::Fault(FaultKind::Recover(n)) => {
                self.with_engine(n, |e, ctx| e.on_recover(ctx));
            }
            EventKind::Fault(_) => {}
        }
        self.drain_effects();
    }

    fn issue(&mut self, idx: usize) {
        let Some(s) = self.streams.get_mut(idx) else {
            return;
        };
        if s.busy {
            return;
        }
        let Some(op) = s.ops.pop_front() else { return };
        s.busy = true;
        let now = self.sim.now();
        let node = op.entry.unwrap_or_else(|| self.route(&op.req));
        let bytes = request_size(&op.req);
        let arrival = now + to_sim(self.sim.topology().delay(LinkScope::Rack, bytes));
        let id = op.req.id();
        self.inflight.insert(
            id,
            InFlight {
                stream: idx,
                node,
                issued: now,
                arrival,
                is_write: op.req.is_write(),
                bound: op.req.bound(),
            },
        );
        self.next_arrival += 1;
        self.arriving.insert(self.next_arrival, (id, node, op.req));
        self.sim
            .schedule_external(arrival, ARRIVE | self.next_arrival);
    }

    fn arrive(&mut self, key: u64) {
        let Some((id, node, req)) = self.arriving.remove(&key) else {
            return;
        };
        let now = self.sim.now();
        if self.sim.is_crashed(node) {
            self.complete(id, now, Err(ReplicationError::Lost), BTreeSet::new());
            return;
        }
        self.with_engine(node, |e, ctx| e.on_request(ctx, req, now));
    }

    fn complete(
        &mut self,
        op: OpId,
        done: SimTime,
        result: Result<ResponseKind, ReplicationError>,
        stages: BTreeSet<Stage>,
    ) {
        let Some(f) = self.inflight.remove(&op) else {
            return;
        };
        let result = match result {
            Ok(ResponseKind::Ack) => OpResult::Ack,
            Ok(ResponseKind::Value(v)) => OpResult::Value(v),
            Ok(ResponseKind::Null) => OpResult::Null,
            Err(e) => OpResult::Failed(e),
        };
        self.outcomes.push(OpOutcome {
            op,
            stream: f.stream,
            node: f.node,
            is_write: f.is_write,
            bound: f.bound,
            issued: f.issued,
            arrival: f.arrival,
            done,
            latency: from_sim(done.saturating_sub(f.arrival)),
            result,
            stages,
        });
        let s = &mut self.streams[f.stream];
        s.busy = false;
        if let Some(next) = s.ops.front() {
            let at = done + to_sim(next.delay);
            self.sim.schedule_external(at, ISSUE | f.stream as u64);
        }
    }

    fn holders(&self, tablet: crate::model::TabletId, id: OpId) -> usize {
        self.env
            .replicas(tablet)
            .iter()
            .filter(|&&p| {
                self.engines[p.0 as usize]
                    .store(tablet)
                    .is_some_and(|s| s.holds(id))
            })
            .count()
    }

    fn drain_effects(&mut self) {
        let now = self.sim.now();
        let effects = std::mem::take(&mut self.effects);
        let mut caught_up = Vec::new();
        for e in effects {
            match e {
                Effect::Respond { op, at, result } => {
                    let (kind, stages, bytes) = match result {
                        Ok(r) => {
                            let b = response_size(&r);
                            (Ok(r.kind), r.stages_completed, b)
                        }
                        Err(e) => (Err(e), BTreeSet::new(), super::messages::HEADER),
                    };
                    let done = at + to_sim(self.sim.topology().delay(LinkScope::Rack, bytes));
                    self.complete(op, done, kind, stages);
                }
                Effect::Assigned {
                    tablet,
                    seq,
                    record,
                } => self.oracle.on_assign(now, tablet, seq, &record),
                Effect::Executed {
                    node,
                    tablet,
                    seq,
                    id,
                } => self.oracle.on_execute(now, node, tablet, seq, id),
                Effect::Installed {
                    node,
                    tablet,
                    executed,
                } => self.oracle.on_install(now, node, tablet, executed),
                Effect::WriteAcked {
                    node,
                    tablet,
                    record,
                    at,
                    needed,
                    ..
                } => {
                    let holders = if needed <= 1 {
                        self.engines[node.0 as usize]
                            .store(tablet)
                            .is_some_and(|s| s.holds(record.id)) as usize
                    } else {
                        self.holders(tablet, record.id)
                    };
                    let needed = needed.min(quorum_size(self.env.replicas(tablet).len()));
                    self.oracle.on_write_ack(at, &record, holders, needed);
                }
                Effect::ConsistentRead {
                    at,
                    arrival,
                    unit,
                    value,
                } => self
                    .oracle
                    .on_consistent_read(at, arrival, &unit, value.as_deref()),
                Effect::CatchUpDone {
                    node,
                    tablet,
                    donor,
                } => caught_up.push((node, tablet, donor)),
                Effect::Fallback { .. } => {}
            }
        }
        // stores already reflect the whole batch, so the order must too
        for (node, tablet, donor) in caught_up {
            let store: Option<&ReplicaStore> = self.engines[node.0 as usize].store(tablet);
            let d = self.engines[donor.0 as usize].store(tablet);
            if let Some(s) = store {
                self.oracle.check_replica(now, node, s, d);
            }
        }
    }
}
