// SPDX-License-Identifier: Apache-2.0

//! One node: its tablet replicas, cost model and CPU, and the protocol
//! handlers.
//!
//! A node's CPU is a FIFO: every local step starts when the previous one
//! ends and takes a noisy duration drawn from the hardware profile. Store
//! state changes when the handler runs; messages and responses leave when
//! the CPU reaches them. Every local step and every delivered message feeds
//! the node's cost model.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::align::align;
use super::messages::{CatchUpBody, Message, HEADER};
use super::{ReplicationConfig, ReplicationError};
use crate::costmodel::{CostKey, CostKind, CostModel, CostModelConfig};
use crate::model::{
    codec, quorum_size, stable_hash, tablet_replicas, DataUnitRef, LatencyBound, LinkScope,
    ModelError, NodeId, OpId, ReadRequest, Response, ResponseKind, Ring, Stage, TabletId,
    ValidatedRequest, WriteRecord,
};
use crate::planner::{dcon, pre_dcon, Geometry, Plan, PlanInput, PlanKind, PlannerBudget, StepId};
use crate::simnet::{from_sim, sim_micros, to_sim, HardwareProfile, Sim, SimTime, Topology};
use crate::storage::{eval_conditions, Membership, Placement, ReplicaStore, StorageConfig};

const TICK: u64 = 1;
const TRANSMIT_TIMEOUT: u64 = 2;
const ROUND_TIMEOUT: u64 = 3;
const ROUND_RETRY: u64 = 4;
const OP_RETRY: u64 = 5;
const DEADLINE: u64 = 6;

const ID_BITS: u64 = (1 << 56) - 1;

fn tag(kind: u64, id: u64) -> u64 {
    (kind << 56) | (id & ID_BITS)
}

/// A catch-up request older than this no longer counts as in flight.
const CATCH_UP_PATIENCE: SimTime = 50_000_000;
/// Re-check interval of a consistent operation that is waiting.
const WAIT_RECHECK: SimTime = 5_000_000;

/// Cluster-wide read-only context: configuration and placement.
#[derive(Debug, Clone)]
pub struct Env {
    pub config: ReplicationConfig,
    ring: Ring,
    by_segment: Vec<Vec<NodeId>>,
}

impl Env {
    pub fn new(config: ReplicationConfig, topology: &Topology) -> Result<Self, ModelError> {
        let by_segment = (0..topology.node_count())
            .map(|s| tablet_replicas(TabletId(s as u64), topology, config.replicas))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Env {
            config,
            ring: Ring::new(topology),
            by_segment,
        })
    }

    pub fn tablet_of(&self, unit: &DataUnitRef) -> TabletId {
        self.ring.tablet_of(&unit.table, &unit.row_key)
    }

    /// Canonical replica list; the first entry owns the ring segment.
    pub fn replicas(&self, tablet: TabletId) -> &[NodeId] {
        &self.by_segment[tablet.segment() % self.by_segment.len()]
    }
}

/// What a handler needs from its surroundings.
pub struct Ctx<'a> {
    pub sim: &'a mut Sim<Message>,
    pub env: &'a Env,
    pub effects: &'a mut Vec<Effect>,
}

/// Observable results of a handler, consumed by the cluster.
#[derive(Debug, Clone)]
pub enum Effect {
    Respond {
        op: OpId,
        at: SimTime,
        result: Result<Response, ReplicationError>,
    },
    Assigned {
        tablet: TabletId,
        seq: u64,
        record: WriteRecord,
    },
    Executed {
        node: NodeId,
        tablet: TabletId,
        seq: u64,
        id: OpId,
    },
    Installed {
        node: NodeId,
        tablet: TabletId,
        executed: u64,
    },
    WriteAcked {
        node: NodeId,
        tablet: TabletId,
        record: WriteRecord,
        at: SimTime,
        /// Replicas that must hold the write: a quorum once transmission
        /// completed, otherwise the receiving replica.
        needed: usize,
        partition: bool,
    },
    ConsistentRead {
        at: SimTime,
        arrival: SimTime,
        unit: DataUnitRef,
        value: Option<Vec<u8>>,
    },
    CatchUpDone {
        node: NodeId,
        tablet: TabletId,
        donor: NodeId,
    },
    Fallback {
        node: NodeId,
        error: ReplicationError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EngineStats {
    /// Busy nanoseconds per step, indexed by step number.
    pub busy_by_step: [u64; 20],
    /// Busy nanoseconds spent inside client write and read operations.
    pub busy_write_ops: u64,
    pub busy_read_ops: u64,
    pub plans: u64,
    pub rounds_led: u64,
    pub rounds_done: u64,
    pub fallbacks: u64,
    pub catch_ups: u64,
    pub partition_acks: u64,
    pub nulls: u64,
}

impl EngineStats {
    pub fn busy_total(&self) -> u64 {
        self.busy_by_step.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Write,
    Read,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reply {
    Client,
    Forward(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Gather,
    Plan,
    Transmit,
    Coordinate,
    Tail,
    /// Consistent operations: finished, or another round needed.
    Check,
    /// Consistent operations waiting on a round or a catch-up.
    Waiting,
}

#[derive(Debug, Clone)]
struct PendingOp {
    id: OpId,
    req: ValidatedRequest,
    reply: Reply,
    arrival: SimTime,
    /// Nanoseconds of the bound consumed before arrival here.
    spent: u64,
    tablet: TabletId,
    unit: DataUnitRef,
    write: Option<WriteRecord>,
    plan: Plan,
    stages: BTreeSet<Stage>,
    phase: Phase,
    batch: Vec<WriteRecord>,
    acks_needed: usize,
    acks: BTreeSet<NodeId>,
    gather_needed: usize,
    gather_got: usize,
    passes: u32,
    /// A consistent write saw an eager round complete after it was sequenced.
    synced: bool,
    client_scope: LinkScope,
    deadline_armed: bool,
}

impl PendingOp {
    fn eager(&self) -> bool {
        self.req.bound().is_infinite()
    }
}

#[derive(Debug, Clone)]
struct Round {
    tablet: TabletId,
    writes: Vec<WriteRecord>,
    ids: HashSet<OpId>,
    eager: bool,
    needed: usize,
    acks: BTreeSet<NodeId>,
    sequenced: bool,
    retries: u32,
    /// Operations resumed when the round ends, with the phase to resume.
    waiters: Vec<(OpId, Phase)>,
}

#[derive(Debug, Clone, Copy, Default)]
struct OrderState {
    next: u64,
    /// Index of the last ordered write placed in the b-list here.
    last_placed: Option<u64>,
}

enum Flow {
    Next(Phase),
    Wait,
    Done,
}

pub struct NodeEngine {
    id: NodeId,
    stores: BTreeMap<TabletId, ReplicaStore>,
    storage: StorageConfig,
    model: CostModel,
    hw: HardwareProfile,
    rng: ChaCha8Rng,
    busy_until: SimTime,
    last_activity: SimTime,
    owner: Owner,
    origin_seq: u64,
    order: BTreeMap<TabletId, OrderState>,
    ops: BTreeMap<OpId, PendingOp>,
    batches: BTreeMap<u64, OpId>,
    rounds: BTreeMap<u64, Round>,
    active: BTreeMap<TabletId, u64>,
    known_seq: BTreeMap<TabletId, u64>,
    catching_up: BTreeMap<TabletId, (SimTime, usize)>,
    views: BTreeMap<TabletId, u64>,
    forwards: BTreeMap<OpId, SimTime>,
    next_id: u64,
    tick_gen: u64,
    write_bytes: (u64, u64),
    read_sizes: VecDeque<usize>,
    stats: EngineStats,
}

fn plan_digest(p: &Plan) -> u64 {
    let mut b = Vec::with_capacity(4 + 17 * 8);
    b.extend_from_slice(&p.mask().to_le_bytes());
    for v in p
        .counts
        .i
        .iter()
        .chain([&p.counts.j1, &p.counts.k1, &p.counts.j2, &p.counts.k2])
    {
        b.extend_from_slice(&v.to_le_bytes());
    }
    stable_hash(&b)
}

impl NodeEngine {
    pub fn new(id: NodeId, env: &Env, topology: &Topology) -> Self {
        let cfg = &env.config;
        let model = CostModel::new(
            cfg.cost_model
                .clone()
                .unwrap_or_else(|| CostModelConfig::for_topology(topology)),
        );
        let mut storage = cfg.storage.clone();
        if let Some(dir) = &storage.log_dir {
            storage.log_dir = Some(dir.join(format!("node{}", id.0)));
        }
        NodeEngine {
            id,
            stores: BTreeMap::new(),
            storage,
            model,
            hw: cfg.hardware.clone(),
            rng: ChaCha8Rng::seed_from_u64(
                cfg.seed ^ stable_hash(format!("node-{}", id.0).as_bytes()),
            ),
            busy_until: 0,
            last_activity: 0,
            owner: Owner::Other,
            origin_seq: 0,
            order: BTreeMap::new(),
            ops: BTreeMap::new(),
            batches: BTreeMap::new(),
            rounds: BTreeMap::new(),
            active: BTreeMap::new(),
            known_seq: BTreeMap::new(),
            catching_up: BTreeMap::new(),
            views: BTreeMap::new(),
            forwards: BTreeMap::new(),
            next_id: 0,
            tick_gen: 0,
            write_bytes: (0, 0),
            read_sizes: VecDeque::new(),
            stats: EngineStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn stores(&self) -> &BTreeMap<TabletId, ReplicaStore> {
        &self.stores
    }

    pub fn store(&self, tablet: TabletId) -> Option<&ReplicaStore> {
        self.stores.get(&tablet)
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut CostModel {
        &mut self.model
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    /// Operations accepted here and not yet answered.
    pub fn in_flight(&self) -> usize {
        self.ops.len() + self.forwards.len()
    }

    /// Schedules the first maintenance tick.
    pub fn start(&mut self, ctx: &mut Ctx) {
        self.schedule_tick(ctx);
    }

    fn schedule_tick(&mut self, ctx: &mut Ctx) {
        let at = ctx.sim.now() + to_sim(ctx.env.config.idle_window);
        ctx.sim
            .schedule_timer(self.id, at, tag(TICK, self.tick_gen));
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        ((self.id.0 as u64) << 36) | self.next_id
    }

    fn ensure_store(&mut self, tablet: TabletId) -> &mut ReplicaStore {
        let cfg = &self.storage;
        self.stores.entry(tablet).or_insert_with(|| {
            if let Some(dir) = &cfg.log_dir {
                let _ = std::fs::create_dir_all(dir);
            }
            ReplicaStore::new(cfg.clone(), tablet)
                .or_else(|_| {
                    let mut c = cfg.clone();
                    c.log_dir = None;
                    ReplicaStore::new(c, tablet)
                })
                .expect("in-memory store")
        })
    }

    fn last_seq(&self, tablet: TabletId) -> u64 {
        self.stores.get(&tablet).map_or(0, |s| s.last_seq())
    }

    fn behind(&self, tablet: TabletId) -> bool {
        self.known_seq.get(&tablet).copied().unwrap_or(0) > self.last_seq(tablet)
    }

    fn syncing(&self, tablet: TabletId, now: SimTime) -> bool {
        self.catching_up
            .get(&tablet)
            .is_some_and(|(t, left)| *left > 0 && now.saturating_sub(*t) < CATCH_UP_PATIENCE)
    }

    fn cursor(&self, now: SimTime) -> SimTime {
        self.busy_until.max(now)
    }

    /// Runs one local step on the CPU.
    fn charge(&mut self, now: SimTime, step: u8, key: CostKey, x: f64, y: f64) -> SimTime {
        let d = self.hw.draw(key.kind, x, y, &mut self.rng);
        let ns = to_sim(d);
        self.busy_until = self.cursor(now) + ns;
        self.model.record_sample(key, x, y, d);
        self.stats.busy_by_step[step as usize] += ns;
        match self.owner {
            Owner::Write => self.stats.busy_write_ops += ns,
            Owner::Read => self.stats.busy_read_ops += ns,
            Owner::Other => {}
        }
        self.busy_until
    }

    fn send(&mut self, ctx: &mut Ctx, to: NodeId, msg: Message) {
        let size = msg.size();
        let at = self.cursor(ctx.sim.now());
        ctx.sim.send_at(at, self.id, to, msg, size);
    }

    fn reachable_others(&self, ctx: &Ctx, tablet: TabletId) -> Vec<NodeId> {
        ctx.env
            .replicas(tablet)
            .iter()
            .copied()
            .filter(|&p| p != self.id && ctx.sim.reachable(self.id, p))
            .collect()
    }

    fn membership(&self, ctx: &Ctx, tablet: TabletId) -> Membership {
        let reps = ctx.env.replicas(tablet);
        Membership {
            replicas: reps.len(),
            reachable: reps
                .iter()
                .filter(|&&p| ctx.sim.reachable(self.id, p))
                .count(),
        }
    }

    /// Rotation holder as seen from here: the first reachable replica at or
    /// after position `last_seq mod r`.
    fn holder(&self, ctx: &Ctx, tablet: TabletId, last_seq: u64) -> Option<NodeId> {
        let reps = ctx.env.replicas(tablet);
        let r = reps.len();
        (0..r)
            .map(|i| reps[(last_seq as usize + i) % r])
            .find(|&p| ctx.sim.reachable(self.id, p))
    }

    fn mean_write_bytes(&self) -> f64 {
        match self.write_bytes {
            (_, 0) => 128.0,
            (sum, n) => sum as f64 / n as f64,
        }
    }

    fn note_write(&mut self, w: &WriteRecord) {
        self.write_bytes.0 += codec::write_size(w) as u64;
        self.write_bytes.1 += 1;
    }

    fn note_read(&mut self, len: usize) {
        self.read_sizes.push_back(len);
        if self.read_sizes.len() > 32 {
            self.read_sizes.pop_front();
        }
    }

    fn geometry(
        &self,
        ctx: &Ctx,
        tablet: TabletId,
        kind: PlanKind,
        eager: bool,
        client_scope: LinkScope,
        rtw: bool,
    ) -> Geometry {
        let topo = ctx.sim.topology();
        let me = self.id;
        let reps = ctx.env.replicas(tablet);
        let q = quorum_size(reps.len());
        let mut others: Vec<LinkScope> = self
            .reachable_others(ctx, tablet)
            .into_iter()
            .map(|p| topo.scope(me, p))
            .collect();
        others.sort_by_key(|s| s.hops());
        let transmit_scope = match others.len() {
            0 => LinkScope::Local,
            n if eager => others[n - 1],
            n => others[q.saturating_sub(2).min(n - 1)],
        };
        let leader = self
            .holder(ctx, tablet, self.last_seq(tablet))
            .unwrap_or(me);
        let lat = |a: NodeId, b: NodeId| topo.latency(topo.scope(a, b));
        let mut paths: Vec<(Duration, NodeId)> = reps
            .iter()
            .copied()
            .filter(|&p| ctx.sim.reachable(me, p))
            .map(|p| (lat(leader, p) + lat(p, me), p))
            .collect();
        paths.sort();
        let need = if eager {
            paths.len()
        } else {
            q.min(paths.len())
        };
        let mut chosen: Vec<(Duration, NodeId)> = paths.iter().copied().take(need).collect();
        if !chosen.iter().any(|(_, p)| *p == me) {
            chosen.pop();
            chosen.push((lat(leader, me), me));
        }
        let crit = chosen.iter().max().map_or(me, |(_, p)| *p);
        let response_bytes = match kind {
            PlanKind::Write => HEADER as f64,
            PlanKind::Read if self.read_sizes.is_empty() => HEADER as f64,
            PlanKind::Read => {
                HEADER as f64
                    + self.read_sizes.iter().sum::<usize>() as f64 / self.read_sizes.len() as f64
            }
        };
        Geometry {
            r: reps.len(),
            write_bytes: self.mean_write_bytes(),
            response_bytes,
            transmit_scope,
            leader_scope: topo.scope(me, leader),
            sequence_scope: topo.scope(leader, crit),
            ack_scope: topo.scope(crit, me),
            client_scope,
            rtw,
        }
    }

    /// Notices replicas that became reachable again and syncs with them.
    fn observe(&mut self, ctx: &mut Ctx) {
        let tablets: Vec<TabletId> = self.stores.keys().copied().collect();
        for t in tablets {
            let mask = ctx
                .env
                .replicas(t)
                .iter()
                .enumerate()
                .filter(|(_, &p)| ctx.sim.reachable(self.id, p))
                .fold(0u64, |m, (i, _)| m | 1 << i);
            if let Some(prev) = self.views.insert(t, mask) {
                if mask & !prev != 0 {
                    self.catching_up.remove(&t);
                    self.request_catch_up(ctx, t, None);
                }
            }
        }
    }

    fn learn_seq(&mut self, ctx: &mut Ctx, tablet: TabletId, seq: u64, from: NodeId) {
        let k = self.known_seq.entry(tablet).or_insert(0);
        *k = (*k).max(seq);
        if seq > self.last_seq(tablet) {
            self.request_catch_up(ctx, tablet, Some(from));
        }
    }

    fn request_catch_up(&mut self, ctx: &mut Ctx, tablet: TabletId, from: Option<NodeId>) {
        let now = ctx.sim.now();
        if self.syncing(tablet, now) {
            return;
        }
        let targets: Vec<NodeId> = match from {
            Some(p) if ctx.sim.reachable(self.id, p) => vec![p],
            _ => self.reachable_others(ctx, tablet),
        };
        if targets.is_empty() {
            ctx.sim.record(Some(self.id), "peer-unavailable", tablet.0);
            ctx.effects.push(Effect::Fallback {
                node: self.id,
                error: ReplicationError::PeerUnavailable(tablet),
            });
            return;
        }
        let after = self.ensure_store(tablet).last_seq();
        self.catching_up.insert(tablet, (now, targets.len()));
        for p in targets {
            self.send(ctx, p, Message::CatchUpRequest { tablet, after });
        }
    }

    // ---- requests ----------------------------------------------------

    /// A client request arriving at this node.
    pub fn on_request(&mut self, ctx: &mut Ctx, req: ValidatedRequest, arrival: SimTime) {
        self.last_activity = ctx.sim.now();
        self.observe(ctx);
        self.admit(ctx, req, arrival, Reply::Client, 0);
    }

    fn admit(
        &mut self,
        ctx: &mut Ctx,
        req: ValidatedRequest,
        arrival: SimTime,
        reply: Reply,
        spent: u64,
    ) {
        let now = ctx.sim.now();
        let unit = req.target().clone();
        let tablet = ctx.env.tablet_of(&unit);
        let reps = ctx.env.replicas(tablet);
        if !reps.contains(&self.id) {
            let topo = ctx.sim.topology();
            let near = reps
                .iter()
                .copied()
                .filter(|&p| ctx.sim.reachable(self.id, p))
                .min_by_key(|&p| topo.scope(self.id, p).hops());
            match near {
                Some(p) => {
                    let id = req.id();
                    self.forwards.insert(id, arrival);
                    let spent = spent + now.saturating_sub(arrival);
                    self.send(
                        ctx,
                        p,
                        Message::Forward {
                            origin_op: id,
                            req,
                            spent,
                        },
                    );
                }
                None => self.respond(
                    ctx,
                    req.id(),
                    reply,
                    Err(ReplicationError::NoReplicaReachable(tablet)),
                ),
            }
            return;
        }
        self.ensure_store(tablet);
        let client_scope = match reply {
            Reply::Client => LinkScope::Rack,
            Reply::Forward(x) => ctx.sim.topology().scope(self.id, x),
        };
        let write = match &req {
            ValidatedRequest::Write(w) => {
                self.origin_seq += 1;
                Some(WriteRecord {
                    id: w.id,
                    target: w.target.clone(),
                    payload: w.payload.clone(),
                    timestamp: ctx.sim.now_skewed(self.id) / 1_000,
                    origin_seq: self.origin_seq,
                    order_index: None,
                    prev_ordered: None,
                    ordered: w.ordered,
                    t_bound: w.t_bound,
                    origin: self.id,
                })
            }
            ValidatedRequest::Read(_) => None,
        };
        let kind = if write.is_some() {
            PlanKind::Write
        } else {
            PlanKind::Read
        };
        let eager = req.bound().is_infinite();
        let op = PendingOp {
            id: req.id(),
            phase: if eager && write.is_none() {
                Phase::Gather
            } else {
                Phase::Plan
            },
            req,
            reply,
            arrival,
            spent,
            tablet,
            unit,
            write,
            plan: Plan::empty(kind, Geometry::default()),
            stages: BTreeSet::new(),
            batch: Vec::new(),
            acks_needed: 0,
            acks: BTreeSet::new(),
            gather_needed: 0,
            gather_got: 0,
            passes: 0,
            synced: false,
            client_scope,
            deadline_armed: false,
        };
        self.drive(ctx, op);
    }

    fn respond(
        &mut self,
        ctx: &mut Ctx,
        op: OpId,
        reply: Reply,
        result: Result<Response, ReplicationError>,
    ) {
        let at = self.cursor(ctx.sim.now());
        ctx.sim.record(Some(self.id), "respond", op.0);
        match reply {
            Reply::Client => ctx.effects.push(Effect::Respond { op, at, result }),
            Reply::Forward(to) => {
                let resp = result.unwrap_or_else(|_| Response {
                    op_id: op,
                    kind: ResponseKind::Null,
                    measured_latency: Duration::ZERO,
                    stages_completed: BTreeSet::new(),
                });
                self.send(
                    ctx,
                    to,
                    Message::ForwardReply {
                        origin_op: op,
                        resp,
                    },
                );
            }
        }
    }

    fn finish(&mut self, ctx: &mut Ctx, op: PendingOp, kind: ResponseKind) {
        let at = self.cursor(ctx.sim.now());
        if let Some(w) = &op.write {
            let needed = if op.stages.contains(&Stage::Transmission) {
                quorum_size(ctx.env.replicas(op.tablet).len())
            } else {
                1
            };
            ctx.effects.push(Effect::WriteAcked {
                node: self.id,
                tablet: op.tablet,
                record: w.clone(),
                at,
                needed,
                partition: false,
            });
        }
        let resp = Response {
            op_id: op.id,
            kind,
            measured_latency: from_sim(at.saturating_sub(op.arrival)),
            stages_completed: op.stages,
        };
        self.respond(ctx, op.id, op.reply, Ok(resp));
    }

    /// Advances an operation until it waits or completes.
    fn drive(&mut self, ctx: &mut Ctx, mut op: PendingOp) {
        self.owner = if op.write.is_some() {
            Owner::Write
        } else {
            Owner::Read
        };
        loop {
            let flow = match op.phase {
                Phase::Gather => self.phase_gather(ctx, &mut op),
                Phase::Plan => self.phase_plan(ctx, &mut op),
                Phase::Transmit => self.phase_transmit(ctx, &mut op),
                Phase::Coordinate => self.phase_coordinate(ctx, &mut op),
                Phase::Tail => self.phase_tail(ctx, &mut op),
                Phase::Check => self.phase_check(ctx, &mut op),
                Phase::Waiting => Flow::Wait,
            };
            match flow {
                Flow::Next(p) => op.phase = p,
                Flow::Wait => {
                    if !op.eager() && !op.deadline_armed {
                        op.deadline_armed = true;
                        let at = self.deadline(op.arrival, &op);
                        ctx.sim.schedule_timer(
                            self.id,
                            at.max(ctx.sim.now()),
                            tag(DEADLINE, op.id.0),
                        );
                    }
                    self.ops.insert(op.id, op);
                    break;
                }
                Flow::Done => break,
            }
        }
        self.owner = Owner::Other;
    }

    fn phase_gather(&mut self, ctx: &mut Ctx, op: &mut PendingOp) -> Flow {
        let tablet = op.tablet;
        let reps = ctx.env.replicas(tablet);
        let q = quorum_size(reps.len());
        let topo = ctx.sim.topology();
        let mut peers = self.reachable_others(ctx, tablet);
        peers.sort_by_key(|&p| topo.scope(self.id, p).hops());
        peers.truncate(q - 1);
        if peers.is_empty() {
            return Flow::Next(Phase::Plan);
        }
        let known: Vec<OpId> = self.stores[&tablet]
            .pending_writes()
            .map(|w| w.id)
            .collect();
        op.gather_needed = peers.len();
        op.gather_got = 0;
        for p in peers {
            self.send(
                ctx,
                p,
                Message::GatherRequest {
                    tablet,
                    op: op.id.0,
                    known: known.clone(),
                },
            );
        }
        let at = ctx.sim.now() + to_sim(ctx.env.config.transmit_timeout);
        ctx.sim.schedule_timer(self.id, at, tag(OP_RETRY, op.id.0));
        Flow::Wait
    }

    /// Latest time a bounded operation may stop waiting on peers and still
    /// answer within its bound.
    fn deadline(&self, arrival: SimTime, op: &PendingOp) -> SimTime {
        let LatencyBound::Finite(d) = op.req.bound() else {
            return SimTime::MAX;
        };
        let mut tail = op.plan.response_cost_us(&self.model);
        if let Some(s19) = StepId::new(19).filter(|_| op.plan.has(19)) {
            tail += op.plan.step_cost_us(&self.model, s19);
        }
        (arrival + to_sim(d)).saturating_sub(op.spent + sim_micros(tail))
    }

    /// A bounded operation still waiting on transmission acks or a round
    /// at its deadline answers with the stages it has.
    fn on_deadline(&mut self, ctx: &mut Ctx, id: OpId) {
        let Some(op) = self.ops.get(&id) else { return };
        if op.eager() || !matches!(op.phase, Phase::Transmit | Phase::Waiting) {
            return;
        }
        let mut op = self.ops.remove(&id).unwrap();
        ctx.sim.record(Some(self.id), "deadline", id.0);
        for s in [17, 18] {
            op.plan.remove(s);
        }
        op.phase = Phase::Tail;
        self.drive(ctx, op);
    }

    fn budget(&self, now: SimTime, op: &PendingOp) -> LatencyBound {
        match op.req.bound() {
            LatencyBound::Infinite => LatencyBound::Infinite,
            LatencyBound::Finite(d) => {
                let used = self.busy_until.saturating_sub(now) + op.spent;
                LatencyBound::Finite(d.saturating_sub(from_sim(used)))
            }
        }
    }

    fn phase_plan(&mut self, ctx: &mut Ctx, op: &mut PendingOp) -> Flow {
        let now = ctx.sim.now();
        let tablet = op.tablet;
        let m = self.membership(ctx, tablet);
        let conds = eval_conditions(&self.stores[&tablet], &op.req, m);
        let eager = op.eager();
        let rtw = op.write.as_ref().is_some_and(|w| w.is_read_test_write());
        let first = op.passes == 0;
        op.passes += 1;
        op.batch.clear();
        op.acks.clear();

        if first && op.write.is_some() {
            let mut rec = op.write.take().unwrap();
            if rec.ordered {
                let st = self.order.entry(tablet).or_default();
                st.next += 1;
                rec.order_index = Some(st.next);
                rec.prev_ordered = st.last_placed;
            }
            self.note_write(&rec);
            if !conds.c {
                // path (1): accept locally under partition
                self.charge(now, 1, CostKey::of(CostKind::Fd), 1.0, 0.0);
                let res = self
                    .stores
                    .get_mut(&tablet)
                    .unwrap()
                    .bl_append(vec![rec.clone()]);
                if let Err(e) = res {
                    ctx.sim.record(Some(self.id), "storage-error", op.id.0);
                    let _ = e;
                }
                op.stages.insert(Stage::Reception);
                self.stats.partition_acks += 1;
                let at = self.cursor(now);
                ctx.effects.push(Effect::WriteAcked {
                    node: self.id,
                    tablet,
                    record: rec.into_disordered(),
                    at,
                    needed: 1,
                    partition: true,
                });
                let resp = Response {
                    op_id: op.id,
                    kind: ResponseKind::Ack,
                    measured_latency: from_sim(at.saturating_sub(op.arrival)),
                    stages_completed: std::mem::take(&mut op.stages),
                };
                self.respond(ctx, op.id, op.reply, Ok(resp));
                return Flow::Done;
            }
            if rec.ordered {
                self.order.entry(tablet).or_default().last_placed = rec.order_index;
            }
            let geom = self.geometry(ctx, tablet, PlanKind::Write, eager, op.client_scope, rtw);
            op.plan = self.make_plan(ctx, op, PlanKind::Write, conds, geom, true);
            let placed = self.stores.get_mut(&tablet).unwrap().blist_put(rec.clone());
            match placed {
                Ok(Placement::BList) => {
                    self.charge(now, 2, CostKey::of(CostKind::Fa), 1.0, 0.0);
                }
                Ok(_) => {
                    self.charge(now, 6, CostKey::of(CostKind::Fd), 1.0, 0.0);
                }
                Err(_) => ctx.sim.record(Some(self.id), "storage-error", op.id.0),
            }
            op.stages.insert(Stage::Reception);
            op.batch.push(rec.clone());
            op.write = Some(rec);
            return Flow::Next(Phase::Transmit);
        }

        if op.write.is_none() && first {
            let geom = self.geometry(ctx, tablet, PlanKind::Read, eager, op.client_scope, false);
            op.plan = self.make_plan(ctx, op, PlanKind::Read, conds, geom, true);
            if !eager {
                let store = &self.stores[&tablet];
                let mut seed = Plan::empty(PlanKind::Read, geom);
                seed.add(19);
                seed.counts.j2 = 1;
                seed.counts.k2 = store.summary(&op.unit.column_family).cf_files as u64;
                let floor = seed.total_us(&self.model);
                let room = match self.budget(now, op) {
                    LatencyBound::Finite(d) => d.as_secs_f64() * 1e6,
                    LatencyBound::Infinite => f64::INFINITY,
                };
                if room <= floor + 1e-9 && store.has_unexecuted(&op.unit) {
                    let k = store.acquire(&op.unit).k;
                    self.charge(now, 19, CostKey::of(CostKind::FR), 1.0, k as f64);
                    op.stages.insert(Stage::Acquisition);
                    self.stats.nulls += 1;
                    let op = op.clone();
                    self.finish(ctx, op, ResponseKind::Null);
                    return Flow::Done;
                }
            }
            return Flow::Next(Phase::Transmit);
        }

        // later passes of consistent operations: drain what is left
        let geom = self.geometry(ctx, tablet, PlanKind::Read, eager, op.client_scope, rtw);
        op.plan = self.make_plan(ctx, op, PlanKind::Read, conds, geom, false);
        Flow::Next(Phase::Transmit)
    }

    fn make_plan(
        &mut self,
        ctx: &mut Ctx,
        op: &PendingOp,
        kind: PlanKind,
        conds: crate::storage::ConditionSet,
        geom: Geometry,
        seeded: bool,
    ) -> Plan {
        let now = ctx.sim.now();
        let store = &self.stores[&op.tablet];
        let input = PlanInput {
            kind,
            conds,
            summary: store.summary(&op.unit.column_family),
            geometry: geom,
            model: &self.model,
        };
        let (plan, _) = if seeded {
            pre_dcon(
                &PlannerBudget {
                    t_r: self.budget(now, op),
                },
                &input,
            )
        } else {
            dcon(None, Plan::empty(PlanKind::Read, geom), &input)
        };
        self.stats.plans += 1;
        ctx.sim.record(Some(self.id), "plan", plan_digest(&plan));
        plan
    }

    fn phase_transmit(&mut self, ctx: &mut Ctx, op: &mut PendingOp) -> Flow {
        let now = ctx.sim.now();
        let tablet = op.tablet;
        if op.plan.has(3) {
            let n = op.plan.counts.i[3] as usize;
            let store = self.stores.get_mut(&tablet).unwrap();
            let drained = store.bl_drain(n);
            for w in &drained {
                let _ = store.blist_put(w.clone());
            }
            if !drained.is_empty() {
                self.charge(now, 3, CostKey::of(CostKind::Fr), drained.len() as f64, 0.0);
            }
            op.batch.extend(drained);
        }
        if op.batch.is_empty() || !op.plan.has(4) {
            return Flow::Next(Phase::Coordinate);
        }
        let others = self.reachable_others(ctx, tablet);
        let q = quorum_size(ctx.env.replicas(tablet).len());
        op.acks_needed = if op.eager() {
            others.len()
        } else {
            (q - 1).min(others.len())
        };
        let id = self.fresh_id();
        let last_seq = self.last_seq(tablet);
        let batch = std::mem::take(&mut op.batch);
        for p in others {
            self.send(
                ctx,
                p,
                Message::WriteBatch {
                    tablet,
                    op: id,
                    writes: batch.clone(),
                    last_seq,
                },
            );
        }
        if op.acks_needed == 0 {
            op.stages.insert(Stage::Transmission);
            return Flow::Next(Phase::Coordinate);
        }
        self.batches.insert(id, op.id);
        let at = now + to_sim(ctx.env.config.transmit_timeout);
        ctx.sim
            .schedule_timer(self.id, at, tag(TRANSMIT_TIMEOUT, id));
        Flow::Wait
    }

    fn phase_coordinate(&mut self, ctx: &mut Ctx, op: &mut PendingOp) -> Flow {
        let now = ctx.sim.now();
        let tablet = op.tablet;
        let eager = op.eager();
        let wants_barrier = eager
            && !op.synced
            && op
                .write
                .as_ref()
                .is_some_and(|w| self.stores[&tablet].is_coordinated(w.id));
        if !op.plan.has(9) && !wants_barrier {
            return Flow::Next(Phase::Tail);
        }
        if self.behind(tablet) || self.syncing(tablet, now) {
            self.request_catch_up(ctx, tablet, None);
            return Flow::Next(if eager { Phase::Check } else { Phase::Tail });
        }
        if let Some(&rid) = self.active.get(&tablet) {
            if eager {
                let r = self.rounds.get_mut(&rid).unwrap();
                r.waiters.push((op.id, Phase::Check));
                op.phase = Phase::Waiting;
                return Flow::Wait;
            }
            return Flow::Next(Phase::Tail);
        }
        let store = self.stores.get_mut(&tablet).unwrap();
        let mut moved = 0;
        if op.plan.has(8) {
            moved = store.bfile_to_blist(op.plan.counts.i[6] as usize);
        }
        let n = if op.plan.has(9) {
            op.plan.counts.i[7] as usize
        } else {
            0
        };
        let take = store.blist_take(n);
        if moved > 0 {
            self.charge(now, 8, CostKey::of(CostKind::Fr), moved as f64, 0.0);
        }
        if take.is_empty() && !wants_barrier {
            return Flow::Next(Phase::Tail);
        }
        let resume = if eager { Phase::Check } else { Phase::Tail };
        self.open_round(ctx, tablet, take, eager, Some((op.id, resume)));
        op.phase = Phase::Waiting;
        Flow::Wait
    }

    fn phase_tail(&mut self, ctx: &mut Ctx, op: &mut PendingOp) -> Flow {
        let now = ctx.sim.now();
        let tablet = op.tablet;
        let eager = op.eager();
        if op.plan.has(17) {
            let n = if eager {
                usize::MAX
            } else {
                op.plan.counts.i[12] as usize
            };
            if self.execute(ctx, tablet, n) > 0 {
                op.stages.insert(Stage::Execution);
            }
        }
        if op.plan.has(18) && self.compact(ctx, tablet, &op.unit.column_family) {
            op.stages.insert(Stage::Compaction);
        }
        if eager {
            return Flow::Next(Phase::Check);
        }
        if op.plan.has(19) {
            let value = self.acquire(now, op);
            let kind = value.map_or(ResponseKind::Null, ResponseKind::Value);
            let done = op.clone();
            self.finish(ctx, done, kind);
        } else {
            let done = op.clone();
            self.finish(ctx, done, ResponseKind::Ack);
        }
        Flow::Done
    }

    fn acquire(&mut self, now: SimTime, op: &mut PendingOp) -> Option<Vec<u8>> {
        let got = self.stores[&op.tablet].acquire(&op.unit);
        self.charge(
            now,
            19,
            CostKey::of(CostKind::FR),
            got.j as f64,
            got.k as f64,
        );
        op.stages.insert(Stage::Acquisition);
        self.note_read(got.value.as_ref().map_or(0, |v| v.len()));
        got.value
    }

    fn phase_check(&mut self, ctx: &mut Ctx, op: &mut PendingOp) -> Flow {
        let now = ctx.sim.now();
        let tablet = op.tablet;
        let store = &self.stores[&tablet];
        let done = match &op.write {
            Some(w) => {
                store.is_coordinated(w.id)
                    && !store.p_list().iter().any(|(_, x)| x.id == w.id)
                    && op.synced
            }
            None => !store.has_unexecuted(&op.unit) && !self.behind(tablet),
        };
        let exhausted = op.passes > ctx.env.config.consistent_rounds;
        if done || exhausted {
            if exhausted && !done {
                ctx.sim.record(Some(self.id), "consistent-give-up", op.id.0);
            }
            if op.write.is_some() {
                let done = op.clone();
                self.finish(ctx, done, ResponseKind::Ack);
            } else {
                let value = self.acquire(now, op);
                let at = self.cursor(now);
                ctx.effects.push(Effect::ConsistentRead {
                    at,
                    arrival: op.arrival,
                    unit: op.unit.clone(),
                    value: value.clone(),
                });
                let kind = value.map_or(ResponseKind::Null, ResponseKind::Value);
                let done = op.clone();
                self.finish(ctx, done, kind);
            }
            return Flow::Done;
        }
        if self.behind(tablet) || self.syncing(tablet, now) || self.active.contains_key(&tablet) {
            if self.behind(tablet) {
                self.request_catch_up(ctx, tablet, None);
            }
            if let Some(&rid) = self.active.get(&tablet) {
                let r = self.rounds.get_mut(&rid).unwrap();
                r.waiters.push((op.id, Phase::Check));
            }
            ctx.sim
                .schedule_timer(self.id, now + WAIT_RECHECK, tag(OP_RETRY, op.id.0));
            op.phase = Phase::Waiting;
            return Flow::Wait;
        }
        op.passes += 0;
        Flow::Next(Phase::Plan)
    }

    /// Executes up to `n` p-list writes of `tablet` (step 17).
    fn execute(&mut self, ctx: &mut Ctx, tablet: TabletId, n: usize) -> usize {
        let now = ctx.sim.now();
        let done = self.stores.get_mut(&tablet).unwrap().execute_writes(n, now);
        if done.is_empty() {
            return 0;
        }
        let rtw = done.iter().any(|(_, w)| w.is_read_test_write());
        let key = CostKey::of(if rtw { CostKind::FeRtw } else { CostKind::Fe });
        self.charge(now, 17, key, done.len() as f64, 0.0);
        for (s, w) in &done {
            ctx.effects.push(Effect::Executed {
                node: self.id,
                tablet,
                seq: *s,
                id: w.id,
            });
        }
        done.len()
    }

    /// Step 18 when condition k holds.
    fn compact(&mut self, ctx: &mut Ctx, tablet: TabletId, cf: &str) -> bool {
        let now = ctx.sim.now();
        let store = self.stores.get_mut(&tablet).unwrap();
        if !store.needs_compaction(cf) {
            return false;
        }
        match store.compact(cf, now) {
            Some(st) => {
                self.charge(now, 18, CostKey::of(CostKind::FC), st.j as f64, st.k as f64);
                true
            }
            None => false,
        }
    }

    // ---- coordination ------------------------------------------------

    fn open_round(
        &mut self,
        ctx: &mut Ctx,
        tablet: TabletId,
        writes: Vec<WriteRecord>,
        eager: bool,
        waiter: Option<(OpId, Phase)>,
    ) {
        let store = self.stores.get_mut(&tablet).unwrap();
        store.t_push(writes.clone());
        let m = self.membership(ctx, tablet);
        let q = quorum_size(m.replicas);
        let rid = self.fresh_id();
        let round = Round {
            tablet,
            ids: writes.iter().map(|w| w.id).collect(),
            writes,
            eager,
            needed: if eager {
                m.reachable
            } else {
                q.min(m.reachable)
            },
            acks: BTreeSet::new(),
            sequenced: false,
            retries: 0,
            waiters: waiter.into_iter().collect(),
        };
        self.rounds.insert(rid, round);
        self.active.insert(tablet, rid);
        let at = ctx.sim.now() + to_sim(ctx.env.config.round_timeout);
        ctx.sim.schedule_timer(self.id, at, tag(ROUND_TIMEOUT, rid));
        self.send_coord(ctx, rid);
    }

    fn send_coord(&mut self, ctx: &mut Ctx, rid: u64) {
        let Some(r) = self.rounds.get(&rid) else {
            return;
        };
        let tablet = r.tablet;
        let last_seq = self.last_seq(tablet);
        let leader = self.holder(ctx, tablet, last_seq).unwrap_or(self.id);
        let (writes, eager) = (r.writes.clone(), r.eager);
        if leader == self.id {
            self.lead(ctx, self.id, self.id, rid, tablet, writes, eager, last_seq);
        } else {
            self.send(
                ctx,
                leader,
                Message::CoordRequest {
                    tablet,
                    round: rid,
                    initiator: self.id,
                    writes,
                    eager,
                    last_seq,
                },
            );
        }
    }

    /// Leader side of a round: align, sequence, distribute.
    #[allow(clippy::too_many_arguments)]
    fn lead(
        &mut self,
        ctx: &mut Ctx,
        from: NodeId,
        initiator: NodeId,
        round: u64,
        tablet: TabletId,
        writes: Vec<WriteRecord>,
        eager: bool,
        hint: u64,
    ) {
        let now = ctx.sim.now();
        self.ensure_store(tablet);
        let own = self.last_seq(tablet);
        if hint > own {
            self.learn_seq(ctx, tablet, hint, from);
        }
        let ok = !self.behind(tablet)
            && !self.syncing(tablet, now)
            && hint <= own
            && self.holder(ctx, tablet, own) == Some(self.id);
        if !ok {
            if initiator == self.id {
                self.on_reject(ctx, round, own, self.id);
            } else {
                self.send(
                    ctx,
                    initiator,
                    Message::CoordReject {
                        tablet,
                        round,
                        last_seq: own,
                    },
                );
            }
            return;
        }
        let n = writes.len() as f64;
        if n > 0.0 {
            self.charge(now, 10, CostKey::of(CostKind::Fa), n, 0.0);
        }
        let seed = ctx.env.config.seed ^ stable_hash(&round.to_le_bytes());
        let store = &self.stores[&tablet];
        let aligned = align(
            writes,
            seed,
            |id| store.is_coordinated(id),
            |o, i| store.order_sequenced(o, i),
        );
        if n > 0.0 {
            self.charge(now, 12, CostKey::of(CostKind::Fc), n, 0.0);
        }
        let seq: Vec<(u64, WriteRecord)> = aligned
            .order
            .into_iter()
            .enumerate()
            .map(|(i, w)| (own + 1 + i as u64, w))
            .collect();
        for (s, w) in &seq {
            ctx.effects.push(Effect::Assigned {
                tablet,
                seq: *s,
                record: w.clone(),
            });
        }
        ctx.sim
            .record(Some(self.id), "assign", own ^ (seq.len() as u64) << 40);
        self.stats.rounds_led += 1;
        let m = self.membership(ctx, tablet);
        let failed = m.reachable < m.replicas;
        self.insert_sequence(ctx, tablet, seq.clone(), failed, eager)
            .expect("leader's own sequence is contiguous");
        for p in self.reachable_others(ctx, tablet) {
            self.send(
                ctx,
                p,
                Message::CoordSequence {
                    tablet,
                    round,
                    initiator,
                    seq: seq.clone(),
                    held: aligned.held.clone(),
                    eager,
                },
            );
        }
        if initiator == self.id {
            self.round_sequenced(ctx, round, self.id);
        }
    }

    /// Steps 14 and 15, then execution for eager rounds.
    fn insert_sequence(
        &mut self,
        ctx: &mut Ctx,
        tablet: TabletId,
        seq: Vec<(u64, WriteRecord)>,
        failed: bool,
        eager: bool,
    ) -> Result<(), crate::storage::StorageError> {
        let now = ctx.sim.now();
        let ids: HashSet<OpId> = seq.iter().map(|(_, w)| w.id).collect();
        let store = self.ensure_store(tablet);
        let n = store.plist_insert(seq, failed)?;
        store.remove_sequenced(&ids);
        if n > 0 {
            self.charge(now, 14, CostKey::of(CostKind::Fi), n as f64, 0.0);
            if failed {
                self.charge(now, 15, CostKey::of(CostKind::Fd), n as f64, 0.0);
            }
        }
        if eager {
            self.execute(ctx, tablet, usize::MAX);
        }
        Ok(())
    }

    fn round_sequenced(&mut self, ctx: &mut Ctx, rid: u64, leader: NodeId) {
        let me = self.id;
        if let Some(r) = self.rounds.get_mut(&rid) {
            r.sequenced = true;
            r.acks.insert(leader);
            r.acks.insert(me);
        }
        self.check_round(ctx, rid);
    }

    fn check_round(&mut self, ctx: &mut Ctx, rid: u64) {
        let done = self
            .rounds
            .get(&rid)
            .is_some_and(|r| r.sequenced && r.acks.len() >= r.needed);
        if done {
            self.close_round(ctx, rid, true);
        }
    }

    fn on_reject(&mut self, ctx: &mut Ctx, rid: u64, last_seq: u64, from: NodeId) {
        let Some(r) = self.rounds.get_mut(&rid) else {
            return;
        };
        if r.sequenced {
            return;
        }
        r.retries += 1;
        let (tablet, retries) = (r.tablet, r.retries);
        if last_seq > self.last_seq(tablet) {
            self.learn_seq(ctx, tablet, last_seq, from);
        }
        if retries > ctx.env.config.coord_retries {
            self.close_round(ctx, rid, false);
            return;
        }
        let at = ctx.sim.now() + 1_000_000 * retries as u64;
        ctx.sim.schedule_timer(self.id, at, tag(ROUND_RETRY, rid));
    }

    /// Ends a round; unsequenced contributions go back to the b-list.
    fn close_round(&mut self, ctx: &mut Ctx, rid: u64, ok: bool) {
        let Some(r) = self.rounds.remove(&rid) else {
            return;
        };
        if self.active.get(&r.tablet) == Some(&rid) {
            self.active.remove(&r.tablet);
        }
        let store = self.stores.get_mut(&r.tablet).unwrap();
        let back: HashSet<OpId> = r
            .ids
            .iter()
            .copied()
            .filter(|id| !store.is_coordinated(*id))
            .collect();
        store.return_to_blist(&back);
        if ok {
            self.stats.rounds_done += 1;
        } else {
            self.stats.fallbacks += 1;
            ctx.sim.record(Some(self.id), "fallback", rid);
            ctx.effects.push(Effect::Fallback {
                node: self.id,
                error: ReplicationError::LeaderFailed(r.tablet),
            });
        }
        for (id, phase) in r.waiters {
            if let Some(mut op) = self.ops.remove(&id) {
                if op.phase != Phase::Waiting {
                    self.ops.insert(id, op);
                    continue;
                }
                if ok {
                    op.stages.insert(Stage::Coordination);
                    if r.eager {
                        if let Some(w) = &op.write {
                            if self.stores[&r.tablet].is_coordinated(w.id) {
                                op.synced = true;
                            }
                        }
                    }
                }
                op.phase = phase;
                self.drive(ctx, op);
            }
        }
    }

    fn wake_waiting(&mut self, ctx: &mut Ctx, tablet: TabletId) {
        let ids: Vec<OpId> = self
            .ops
            .values()
            .filter(|o| o.tablet == tablet && o.phase == Phase::Waiting)
            .map(|o| o.id)
            .collect();
        for id in ids {
            let mut op = self.ops.remove(&id).unwrap();
            op.phase = Phase::Check;
            self.drive(ctx, op);
        }
    }

    // ---- messages ----------------------------------------------------

    pub fn on_message(
        &mut self,
        ctx: &mut Ctx,
        from: NodeId,
        msg: Message,
        size: usize,
        sent_at: SimTime,
    ) {
        let now = ctx.sim.now();
        self.last_activity = now;
        let scope = ctx.sim.topology().scope(from, self.id);
        if scope != LinkScope::Local {
            self.model.record_sample(
                CostKey::transmit(scope),
                size as f64 / 1024.0,
                0.0,
                from_sim(now.saturating_sub(sent_at)),
            );
        }
        self.observe(ctx);
        self.owner = Owner::Other;
        match msg {
            Message::Forward { req, spent, .. } => {
                let spent = spent + now.saturating_sub(sent_at);
                self.admit(ctx, req, now, Reply::Forward(from), spent);
            }
            Message::ForwardReply {
                origin_op,
                mut resp,
            } => {
                if let Some(arrival) = self.forwards.remove(&origin_op) {
                    resp.measured_latency = from_sim(now.saturating_sub(arrival));
                    ctx.effects.push(Effect::Respond {
                        op: origin_op,
                        at: now,
                        result: Ok(resp),
                    });
                }
            }
            Message::WriteBatch {
                tablet,
                op,
                writes,
                last_seq,
            } => {
                self.ensure_store(tablet);
                if last_seq > self.last_seq(tablet) {
                    self.learn_seq(ctx, tablet, last_seq, from);
                }
                let (mut listed, mut spilled) = (0usize, 0usize);
                for w in writes {
                    let store = self.stores.get_mut(&tablet).unwrap();
                    if store.holds(w.id) {
                        continue;
                    }
                    self.write_bytes.0 += codec::write_size(&w) as u64;
                    self.write_bytes.1 += 1;
                    match store.blist_put(w) {
                        Ok(Placement::BList) => listed += 1,
                        Ok(_) => spilled += 1,
                        Err(_) => {}
                    }
                }
                if listed > 0 {
                    self.charge(now, 5, CostKey::of(CostKind::Fa), listed as f64, 0.0);
                }
                if spilled > 0 {
                    self.charge(now, 6, CostKey::of(CostKind::Fd), spilled as f64, 0.0);
                }
                let last_seq = self.last_seq(tablet);
                self.send(
                    ctx,
                    from,
                    Message::Ack {
                        tablet,
                        op,
                        last_seq,
                    },
                );
            }
            Message::Ack {
                tablet,
                op,
                last_seq,
            } => {
                if last_seq > self.last_seq(tablet) {
                    self.learn_seq(ctx, tablet, last_seq, from);
                }
                self.on_ack(ctx, op, from);
            }
            Message::CoordRequest {
                tablet,
                round,
                initiator,
                writes,
                eager,
                last_seq,
            } => self.lead(ctx, from, initiator, round, tablet, writes, eager, last_seq),
            Message::CoordReject {
                round, last_seq, ..
            } => self.on_reject(ctx, round, last_seq, from),
            Message::CoordSequence {
                tablet,
                round,
                initiator,
                seq,
                eager,
                ..
            } => {
                if let Some((s, _)) = seq.last() {
                    let k = self.known_seq.entry(tablet).or_insert(0);
                    *k = (*k).max(*s);
                }
                let m = self.membership(ctx, tablet);
                let failed = m.reachable < m.replicas;
                match self.insert_sequence(ctx, tablet, seq, failed, eager) {
                    Err(_) => {
                        self.catching_up.remove(&tablet);
                        self.request_catch_up(ctx, tablet, Some(from));
                    }
                    Ok(()) => {
                        if initiator == self.id {
                            self.round_sequenced(ctx, round, from);
                        } else {
                            self.send(ctx, initiator, Message::CoordAck { tablet, round });
                        }
                    }
                }
            }
            Message::CoordAck { round, .. } => {
                if let Some(r) = self.rounds.get_mut(&round) {
                    r.acks.insert(from);
                }
                self.check_round(ctx, round);
            }
            Message::GatherRequest { tablet, op, known } => {
                let store = self.ensure_store(tablet);
                let known: HashSet<OpId> = known.into_iter().collect();
                let writes: Vec<WriteRecord> = store
                    .pending_writes()
                    .filter(|w| !known.contains(&w.id))
                    .cloned()
                    .collect();
                let last_seq = store.last_seq();
                self.send(
                    ctx,
                    from,
                    Message::GatherReply {
                        tablet,
                        op,
                        writes,
                        last_seq,
                    },
                );
            }
            Message::GatherReply {
                tablet,
                op,
                writes,
                last_seq,
            } => {
                if last_seq > self.last_seq(tablet) {
                    self.learn_seq(ctx, tablet, last_seq, from);
                }
                let store = self.ensure_store(tablet);
                let mut n = 0;
                for w in writes {
                    if !store.holds(w.id) && store.blist_put(w).is_ok() {
                        n += 1;
                    }
                }
                if n > 0 {
                    self.charge(now, 5, CostKey::of(CostKind::Fa), n as f64, 0.0);
                }
                let id = OpId(op);
                if let Some(mut o) = self.ops.remove(&id) {
                    if o.phase == Phase::Gather {
                        o.gather_got += 1;
                        if o.gather_got >= o.gather_needed {
                            o.phase = Phase::Plan;
                            self.drive(ctx, o);
                            return;
                        }
                    }
                    self.ops.insert(id, o);
                }
            }
            Message::CatchUpRequest { tablet, after } => {
                let store = self.ensure_store(tablet);
                let last_seq = store.last_seq();
                let body = if last_seq <= after {
                    CatchUpBody::Nothing
                } else if let Some(recs) = store.catch_up_records(after) {
                    CatchUpBody::Records(recs)
                } else {
                    CatchUpBody::Snapshot(Box::new(store.snapshot()))
                };
                if let CatchUpBody::Records(r) = &body {
                    self.charge(now, 8, CostKey::of(CostKind::Fr), r.len() as f64, 0.0);
                }
                self.send(
                    ctx,
                    from,
                    Message::CatchUpChunk {
                        tablet,
                        body,
                        last_seq,
                    },
                );
            }
            Message::CatchUpChunk {
                tablet,
                body,
                last_seq,
            } => self.on_catch_up(ctx, from, tablet, body, last_seq),
        }
    }

    fn on_ack(&mut self, ctx: &mut Ctx, batch: u64, from: NodeId) {
        let Some(&id) = self.batches.get(&batch) else {
            return;
        };
        let Some(mut op) = self.ops.remove(&id) else {
            self.batches.remove(&batch);
            return;
        };
        if op.phase != Phase::Transmit {
            self.ops.insert(id, op);
            return;
        }
        op.acks.insert(from);
        if op.acks.len() >= op.acks_needed {
            self.batches.remove(&batch);
            op.stages.insert(Stage::Transmission);
            op.phase = Phase::Coordinate;
            self.drive(ctx, op);
        } else {
            self.ops.insert(id, op);
        }
    }

    fn on_catch_up(
        &mut self,
        ctx: &mut Ctx,
        from: NodeId,
        tablet: TabletId,
        body: CatchUpBody,
        last_seq: u64,
    ) {
        let k = self.known_seq.entry(tablet).or_insert(0);
        *k = (*k).max(last_seq);
        let own = self.ensure_store(tablet).last_seq();
        let m = self.membership(ctx, tablet);
        let failed = m.reachable < m.replicas;
        let mut changed = false;
        match body {
            CatchUpBody::Nothing => {}
            CatchUpBody::Records(recs) => {
                let fresh: Vec<_> = recs.into_iter().filter(|(s, _)| *s > own).collect();
                if fresh.first().is_some_and(|(s, _)| *s == own + 1) {
                    changed = self
                        .insert_sequence(ctx, tablet, fresh, failed, true)
                        .is_ok();
                }
            }
            CatchUpBody::Snapshot(snap) => {
                let snap_last = snap.p_list.last().map_or(snap.executed_seq, |(s, _)| *s);
                let store = self.stores.get_mut(&tablet).unwrap();
                if snap_last > own && snap.executed_seq >= store.executed_seq() {
                    store.install_snapshot(*snap);
                    let executed = store.executed_seq();
                    ctx.effects.push(Effect::Installed {
                        node: self.id,
                        tablet,
                        executed,
                    });
                    self.execute(ctx, tablet, usize::MAX);
                    changed = true;
                }
            }
        }
        if changed {
            self.stats.catch_ups += 1;
            ctx.sim
                .record(Some(self.id), "catch-up", self.last_seq(tablet));
            ctx.effects.push(Effect::CatchUpDone {
                node: self.id,
                tablet,
                donor: from,
            });
        }
        if let Some((_, left)) = self.catching_up.get_mut(&tablet) {
            *left = left.saturating_sub(1);
        }
        if !self.behind(tablet) {
            self.catching_up.remove(&tablet);
            self.wake_waiting(ctx, tablet);
        }
    }

    // ---- timers ------------------------------------------------------

    pub fn on_timer(&mut self, ctx: &mut Ctx, t: u64) {
        let (kind, id) = (t >> 56, t & ID_BITS);
        self.observe(ctx);
        match kind {
            TICK if id == self.tick_gen => self.tick(ctx),
            TRANSMIT_TIMEOUT => self.transmit_timeout(ctx, id),
            ROUND_TIMEOUT => {
                if self.rounds.contains_key(&id) {
                    self.close_round(ctx, id, false);
                }
            }
            ROUND_RETRY => {
                if self.rounds.get(&id).is_some_and(|r| !r.sequenced) {
                    self.send_coord(ctx, id);
                }
            }
            DEADLINE => self.on_deadline(ctx, OpId(id)),
            OP_RETRY => {
                let op = OpId(id);
                let phase = self.ops.get(&op).map(|o| o.phase);
                match phase {
                    Some(Phase::Gather) => {
                        let mut o = self.ops.remove(&op).unwrap();
                        o.phase = Phase::Plan;
                        self.drive(ctx, o);
                    }
                    Some(Phase::Waiting) => {
                        let o = self.ops.get(&op).unwrap();
                        if !self.active.contains_key(&o.tablet) {
                            let mut o = self.ops.remove(&op).unwrap();
                            o.phase = Phase::Check;
                            self.drive(ctx, o);
                        } else {
                            let at = ctx.sim.now() + WAIT_RECHECK;
                            ctx.sim.schedule_timer(self.id, at, tag(OP_RETRY, id));
                        }
                    }
                    _ => {}
                }
            }
            _ => {}
        }
    }

    fn transmit_timeout(&mut self, ctx: &mut Ctx, batch: u64) {
        let Some(id) = self.batches.remove(&batch) else {
            return;
        };
        let Some(mut op) = self.ops.remove(&id) else {
            return;
        };
        if op.phase != Phase::Transmit {
            self.ops.insert(id, op);
            return;
        }
        let q = quorum_size(ctx.env.replicas(op.tablet).len());
        let passes = op.passes;
        if op.acks.len() + 1 >= q {
            op.stages.insert(Stage::Transmission);
            op.phase = Phase::Coordinate;
            self.drive(ctx, op);
            return;
        }
        match op.write.clone() {
            Some(w) if passes == 1 => {
                // no quorum in time: keep the write locally as disordered
                let now = ctx.sim.now();
                self.owner = Owner::Write;
                self.charge(now, 1, CostKey::of(CostKind::Fd), 1.0, 0.0);
                self.owner = Owner::Other;
                let _ = self
                    .stores
                    .get_mut(&op.tablet)
                    .unwrap()
                    .bl_append(vec![w.clone()]);
                self.stats.partition_acks += 1;
                let at = self.cursor(now);
                ctx.effects.push(Effect::WriteAcked {
                    node: self.id,
                    tablet: op.tablet,
                    record: w.into_disordered(),
                    at,
                    needed: 1,
                    partition: true,
                });
                let resp = Response {
                    op_id: op.id,
                    kind: ResponseKind::Ack,
                    measured_latency: from_sim(at.saturating_sub(op.arrival)),
                    stages_completed: op.stages.clone(),
                };
                self.respond(ctx, op.id, op.reply, Ok(resp));
            }
            _ => {
                op.phase = Phase::Coordinate;
                self.drive(ctx, op);
            }
        }
    }

    fn tick(&mut self, ctx: &mut Ctx) {
        let now = ctx.sim.now();
        self.schedule_tick(ctx);
        let tablets: Vec<TabletId> = self.stores.keys().copied().collect();
        for &t in &tablets {
            if self.behind(t) && !self.syncing(t, now) {
                self.request_catch_up(ctx, t, None);
            }
        }
        let idle = now.saturating_sub(self.last_activity) >= to_sim(ctx.env.config.idle_window);
        if !idle || self.busy_until > now {
            return;
        }
        for t in tablets {
            self.background(ctx, t);
        }
    }

    /// Idle-time work on one tablet under the background budget.
    fn background(&mut self, ctx: &mut Ctx, tablet: TabletId) {
        let now = ctx.sim.now();
        let store = &self.stores[&tablet];
        let cf = store
            .pending_writes()
            .next()
            .map(|w| w.target.column_family.clone())
            .or_else(|| {
                store
                    .p_list()
                    .front()
                    .map(|(_, w)| w.target.column_family.clone())
            })
            .or_else(|| {
                store
                    .column_families()
                    .find(|cf| store.needs_compaction(cf))
                    .cloned()
            });
        let Some(cf) = cf else {
            let _ = self.stores.get_mut(&tablet).unwrap().bl_reset_if_drained();
            return;
        };
        if self.behind(tablet) || self.syncing(tablet, now) {
            return;
        }
        let probe = ValidatedRequest::Read(ReadRequest {
            id: OpId(0),
            target: DataUnitRef {
                table: String::new(),
                row_key: Vec::new(),
                column_family: cf.clone(),
                column: crate::model::ColumnKey::new(""),
            },
            t_bound: LatencyBound::Finite(ctx.env.config.background_budget),
        });
        let m = self.membership(ctx, tablet);
        let conds = eval_conditions(store, &probe, m);
        let geom = self.geometry(ctx, tablet, PlanKind::Read, false, LinkScope::Local, false);
        let input = PlanInput {
            kind: PlanKind::Read,
            conds,
            summary: store.summary(&cf),
            geometry: geom,
            model: &self.model,
        };
        let budget = ctx.env.config.background_budget.as_secs_f64() * 1e6;
        let (plan, _) = dcon(Some(budget), Plan::empty(PlanKind::Read, geom), &input);
        self.stats.plans += 1;
        ctx.sim
            .record(Some(self.id), "plan-idle", plan_digest(&plan));

        if plan.has(3) {
            let store = self.stores.get_mut(&tablet).unwrap();
            let drained = store.bl_drain(plan.counts.i[3] as usize);
            for w in &drained {
                let _ = store.blist_put(w.clone());
            }
            if !drained.is_empty() {
                self.charge(now, 3, CostKey::of(CostKind::Fr), drained.len() as f64, 0.0);
                let id = self.fresh_id();
                let last_seq = self.last_seq(tablet);
                for p in self.reachable_others(ctx, tablet) {
                    self.send(
                        ctx,
                        p,
                        Message::WriteBatch {
                            tablet,
                            op: id,
                            writes: drained.clone(),
                            last_seq,
                        },
                    );
                }
            }
        }
        if plan.has(9) && !self.active.contains_key(&tablet) {
            let store = self.stores.get_mut(&tablet).unwrap();
            let moved = if plan.has(8) {
                store.bfile_to_blist(plan.counts.i[6] as usize)
            } else {
                0
            };
            let take = store.blist_take(plan.counts.i[7] as usize);
            if moved > 0 {
                self.charge(now, 8, CostKey::of(CostKind::Fr), moved as f64, 0.0);
            }
            if !take.is_empty() {
                self.open_round(ctx, tablet, take, false, None);
            }
        }
        if plan.has(17) {
            self.execute(ctx, tablet, plan.counts.i[12] as usize);
        }
        if plan.has(18) {
            self.compact(ctx, tablet, &cf);
        }
        let _ = self.stores.get_mut(&tablet).unwrap().bl_reset_if_drained();
    }

    // ---- faults ------------------------------------------------------

    /// The node halts with its state retained. Returns the client
    /// operations that will never be answered.
    pub fn on_crash(&mut self) -> Vec<OpId> {
        let mut lost: Vec<OpId> = self
            .ops
            .values()
            .filter(|o| o.reply == Reply::Client)
            .map(|o| o.id)
            .collect();
        lost.extend(self.forwards.keys().copied());
        self.ops.clear();
        self.batches.clear();
        self.rounds.clear();
        self.active.clear();
        self.forwards.clear();
        self.catching_up.clear();
        lost
    }

    pub fn on_recover(&mut self, ctx: &mut Ctx) {
        let now = ctx.sim.now();
        self.busy_until = now;
        self.last_activity = now;
        for s in self.stores.values_mut() {
            s.return_t_list();
        }
        self.tick_gen += 1;
        self.schedule_tick(ctx);
        let tablets: Vec<TabletId> = self.stores.keys().copied().collect();
        for t in tablets {
            self.request_catch_up(ctx, t, None);
        }
        self.observe(ctx);
    }
}
