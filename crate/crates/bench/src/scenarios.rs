// SPDX-License-Identifier: Apache-2.0

//! The runnable experiments. Every measured phase gets a fresh cluster
//! built from the same seed, warmed by the insert preload.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use latbound_core::model::{
    DataUnitRef, LatencyBound, NodeId, OpId, ReadRequest, ValidWrite, ValidatedRequest,
    WritePayload,
};
use latbound_core::planner::{pre_dcon, PlannerBudget};
use latbound_core::replication::{Cluster, ClusterError, EngineStats, OpOutcome, StreamOp};

use crate::config::{BenchConfig, ConfigError, TopologyPreset};
use crate::report::{to_csv, AggRow, OpRow, ScenarioReport};
use crate::stats::percentile_sorted;
use crate::synth::{random_model, random_state};
use crate::workload::{
    gen_workload, key_name, split_streams, value_for, GenOp, GroupShape, KeyDist, OpKind,
    WorkloadError, WorkloadSpec,
};

pub const SCENARIOS: [&str; 7] = [
    "bound-sweep-write",
    "bound-sweep-read",
    "varw-longr",
    "imw-varr",
    "cross-dc",
    "dcon-overhead",
    "mix-tables",
];

pub const TABLE: &str = "usertable";
pub const FAMILY: &str = "cf";
pub const COLUMN: &str = "field0";

/// Simulated time allowed for background work after a phase.
const SETTLE: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

pub fn run_scenario(name: &str, cfg: &BenchConfig) -> Result<ScenarioReport, BenchError> {
    cfg.validate()?;
    let mut r = Runner::new(name, cfg);
    match name {
        "bound-sweep-write" => r.bound_sweep(true)?,
        "bound-sweep-read" => r.bound_sweep(false)?,
        "varw-longr" => r.varw_longr()?,
        "imw-varr" => {
            let rows = r.imw_varr(cfg.topology, "")?;
            r.report.extra.push(("values.csv".into(), to_csv(&rows)));
        }
        "cross-dc" => {
            let mut rows = r.imw_varr(TopologyPreset::TwoDc, "high/")?;
            rows.extend(r.imw_varr(TopologyPreset::TwoDcLowBandwidth, "low/")?);
            r.report.extra.push(("values.csv".into(), to_csv(&rows)));
        }
        "dcon-overhead" => r.dcon_overhead(),
        "mix-tables" => r.mix_tables()?,
        other => return Err(BenchError::UnknownScenario(other.to_string())),
    }
    Ok(r.finish())
}

/// Non-Null probe reads of one imw-varr phase.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValuesRow {
    pub phase: String,
    pub bound_us: Option<u64>,
    pub probes: usize,
    pub values: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OverheadRow {
    pub percentile: f64,
    pub nanos: u64,
}

pub fn unit(key: &str) -> DataUnitRef {
    DataUnitRef::new(TABLE, key.as_bytes(), FAMILY, COLUMN)
}

pub fn to_request(id: OpId, op: &GenOp) -> ValidatedRequest {
    match op.kind {
        OpKind::Write => ValidatedRequest::Write(ValidWrite {
            id,
            target: unit(&op.key),
            payload: WritePayload::put(COLUMN, op.value.clone()),
            ordered: op.ordered,
            t_bound: op.bound,
        }),
        OpKind::Read => ValidatedRequest::Read(ReadRequest {
            id,
            target: unit(&op.key),
            t_bound: op.bound,
        }),
    }
}

/// Wall-clock nanoseconds of `n` planner runs on random states, sorted.
pub fn planner_overhead(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<_> = (0..16).map(|_| random_model(&mut rng)).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = random_state(&mut rng, 200, false);
        let input = s.input(&models[i % models.len()]);
        let budget = PlannerBudget { t_r: s.bound };
        let t0 = Instant::now();
        let plan = pre_dcon(&budget, &input);
        let dt = t0.elapsed();
        std::hint::black_box(plan);
        out.push(dt.as_nanos() as u64);
    }
    out.sort_unstable();
    out
}

struct Runner<'a> {
    cfg: &'a BenchConfig,
    report: ScenarioReport,
    next_id: u64,
}

fn bound_label(b: LatencyBound) -> String {
    match b {
        LatencyBound::Finite(d) => format!("{}ms", d.as_millis()),
        LatencyBound::Infinite => "inf".into(),
    }
}

fn stats_delta(after: &EngineStats, before: &EngineStats) -> EngineStats {
    let mut d = after.clone();
    for (a, b) in d.busy_by_step.iter_mut().zip(before.busy_by_step) {
        *a -= b;
    }
    d.busy_write_ops -= before.busy_write_ops;
    d.busy_read_ops -= before.busy_read_ops;
    d
}

impl<'a> Runner<'a> {
    fn new(name: &str, cfg: &'a BenchConfig) -> Self {
        Runner {
            cfg,
            report: ScenarioReport {
                scenario: name.to_string(),
                seed: cfg.seed,
                config_digest: cfg.digest(),
                trace_tsv: "time_ns\tnode\tkind\tdigest\n".into(),
                ..Default::default()
            },
            next_id: 0,
        }
    }

    fn finish(self) -> ScenarioReport {
        self.report
    }

    fn stream_ops(
        &mut self,
        ops: Vec<GenOp>,
        entry: &dyn Fn(&DataUnitRef) -> Option<NodeId>,
    ) -> Vec<StreamOp> {
        ops.into_iter()
            .map(|op| {
                self.next_id += 1;
                let req = to_request(OpId(self.next_id), &op);
                let e = entry(req.target());
                StreamOp {
                    entry: e,
                    ..StreamOp::new(req)
                }
            })
            .collect()
    }

    /// A fresh cluster with the cost model trained by the preload. The
    /// preload's outcomes and trace are discarded.
    fn warm_cluster(&mut self, preset: TopologyPreset) -> Result<Cluster, BenchError> {
        let topo = preset.build();
        let rc = self.cfg.replication_for(&topo);
        let mut c = Cluster::new(topo, rc)?;
        let n = if self.cfg.preload == 0 {
            0
        } else {
            self.cfg.scaled(self.cfg.preload)
        };
        let cycle = [
            LatencyBound::Infinite,
            LatencyBound::millis(200),
            LatencyBound::millis(50),
            LatencyBound::millis(0),
        ];
        let ops: Vec<GenOp> = (0..n)
            .map(|i| GenOp {
                kind: OpKind::Write,
                key: key_name(i % self.cfg.key_space),
                bound: cycle[i % cycle.len()],
                ordered: true,
                value: value_for(i as u64, self.cfg.value_size),
                group: None,
            })
            .collect();
        for s in split_streams(ops, self.cfg.streams) {
            let ops = self.stream_ops(s, &|_| None);
            c.add_stream(ops, 0);
        }
        c.run();
        let t = c.now();
        c.run_until(t + to_ns(SETTLE));
        c.take_outcomes();
        c.clear_trace();
        Ok(c)
    }

    /// Runs `streams` to completion and records rows, aggregates, trace
    /// and oracle results under `phase`.
    fn run_phase(
        &mut self,
        c: &mut Cluster,
        phase: &str,
        streams: Vec<Vec<GenOp>>,
        entry: &dyn Fn(&DataUnitRef) -> Option<NodeId>,
    ) -> Result<(Vec<OpOutcome>, EngineStats), BenchError> {
        let before = c.stats();
        let start = c.now();
        for s in streams {
            let ops = self.stream_ops(s, entry);
            c.add_stream(ops, start);
        }
        c.run();
        let delta = stats_delta(&c.stats(), &before);
        let mut outcomes = c.take_outcomes();
        outcomes.sort_by_key(|o| o.op);
        let t = c.now();
        c.run_until(t + to_ns(SETTLE));
        c.final_check();

        let rows: Vec<OpRow> = outcomes
            .iter()
            .map(|o| OpRow::from_outcome(phase, o))
            .collect();
        self.report
            .aggregates
            .extend(AggRow::for_phase(phase, &rows));
        self.report.rows.extend(rows);
        let tsv = c.trace().to_tsv();
        let body = tsv.split_once('\n').map_or("", |(_, b)| b);
        self.report.trace_tsv.push_str(body);
        for v in c.oracle().violations() {
            self.report.violations.push(format!("{phase}: {v}"));
        }
        self.report.oracle_checks += c.oracle().checks();
        self.report.costmodel = costmodel_text(c, phase);
        Ok((outcomes, delta))
    }

    fn spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            key_space: self.cfg.key_space,
            value_size: self.cfg.value_size,
            keys: KeyDist::Zipfian(self.cfg.zipf_theta),
            seed: self.cfg.seed,
            ..Default::default()
        }
    }

    fn bound_sweep(&mut self, writes: bool) -> Result<(), BenchError> {
        let p = self.cfg.sweep.clone();
        let n = self.cfg.scaled(p.ops_per_bound);
        for &ms in &p.bounds_ms {
            let b = LatencyBound::millis(ms);
            let spec = if writes {
                WorkloadSpec {
                    op_count: n,
                    ratio: (1, 0),
                    write_bound: b,
                    ..self.spec()
                }
            } else {
                let w = p.writes_per_read;
                WorkloadSpec {
                    op_count: (n / (w + 1)).max(1),
                    group: Some(GroupShape {
                        writes: w,
                        write_bound: LatencyBound::millis(0),
                        read_bounds: vec![b],
                        ordered: true,
                        fresh_keys: false,
                    }),
                    ..self.spec()
                }
            };
            let ops = gen_workload(&spec)?;
            let mut c = self.warm_cluster(self.cfg.topology)?;
            self.run_phase(
                &mut c,
                &format!("bound={}", bound_label(b)),
                split_streams(ops, self.cfg.streams),
                &|_| None,
            )?;
        }
        Ok(())
    }

    fn varw_longr(&mut self) -> Result<(), BenchError> {
        let p = self.cfg.varw.clone();
        let groups = self.cfg.scaled(p.groups);
        for &ms in &p.write_bounds_ms {
            let b = LatencyBound::millis(ms);
            let spec = WorkloadSpec {
                op_count: groups,
                group: Some(GroupShape {
                    writes: p.writes_per_group,
                    write_bound: b,
                    read_bounds: vec![LatencyBound::Infinite],
                    ordered: true,
                    fresh_keys: true,
                }),
                ..self.spec()
            };
            let ops = gen_workload(&spec)?;
            let mut c = self.warm_cluster(self.cfg.topology)?;
            self.run_phase(
                &mut c,
                &format!("write_bound={}", bound_label(b)),
                split_streams(ops, self.cfg.streams),
                &|_| None,
            )?;
        }
        Ok(())
    }

    /// Immediate writes then a probe read per group. With `prefix` set the
    /// clients enter at a replica outside the tablet's home datacenter.
    fn imw_varr(
        &mut self,
        preset: TopologyPreset,
        prefix: &str,
    ) -> Result<Vec<ValuesRow>, BenchError> {
        let p = self.cfg.imw.clone();
        let groups = self.cfg.scaled(p.groups);
        let mut bounds: Vec<LatencyBound> = p
            .read_bounds_ms
            .iter()
            .map(|&ms| LatencyBound::millis(ms))
            .collect();
        if p.include_infinite {
            bounds.push(LatencyBound::Infinite);
        }
        let mut out = Vec::new();
        for b in bounds {
            let spec = WorkloadSpec {
                op_count: groups,
                group: Some(GroupShape {
                    writes: p.writes_per_group,
                    write_bound: LatencyBound::millis(0),
                    read_bounds: vec![b, LatencyBound::Infinite],
                    ordered: true,
                    fresh_keys: true,
                }),
                ..self.spec()
            };
            let ops = gen_workload(&spec)?;
            let mut c = self.warm_cluster(preset)?;
            let remote = !prefix.is_empty();
            let env = c.env().clone();
            let topo = preset.build();
            let entry = move |u: &DataUnitRef| -> Option<NodeId> {
                if !remote {
                    return None;
                }
                let reps = env.replicas(env.tablet_of(u));
                let home = topo.location(reps[0]).dc;
                reps.iter().copied().find(|&n| topo.location(n).dc != home)
            };
            let phase = format!("{prefix}read_bound={}", bound_label(b));
            let (outcomes, _) =
                self.run_phase(&mut c, &phase, split_streams(ops, self.cfg.streams), &entry)?;
            let probes = probe_ids(&outcomes);
            let hit: Vec<&OpOutcome> = outcomes
                .iter()
                .filter(|o| probes.contains(&o.op.0))
                .collect();
            out.push(ValuesRow {
                phase,
                bound_us: b.as_micros_f64().map(|v| v as u64),
                probes: hit.len(),
                values: hit
                    .iter()
                    .filter(|o| matches!(o.result, latbound_core::replication::OpResult::Value(_)))
                    .count(),
            });
        }
        Ok(out)
    }

    fn dcon_overhead(&mut self) {
        let n = self.cfg.overhead.invocations.max(1);
        let nanos = planner_overhead(n, self.cfg.seed);
        let mut rows = Vec::new();
        for i in 1..=100 {
            let p = i as f64;
            rows.push(OverheadRow {
                percentile: p,
                nanos: percentile_sorted(&nanos, p).unwrap_or(0),
            });
        }
        for p in [99.9, 99.99] {
            rows.push(OverheadRow {
                percentile: p,
                nanos: percentile_sorted(&nanos, p).unwrap_or(0),
            });
        }
        rows.sort_by(|a, b| a.percentile.total_cmp(&b.percentile));
        self.report
            .extra
            .push(("overhead_cdf.csv".into(), to_csv(&rows)));
    }

    fn mix_tables(&mut self) -> Result<(), BenchError> {
        let p = self.cfg.mix.clone();
        let n = self.cfg.scaled(p.ops_per_round);
        let imm = LatencyBound::millis(0);
        let inf = LatencyBound::Infinite;
        let rounds = [
            ("t3", (9, 1), false, imm, inf),
            ("t3", (9, 1), true, imm, inf),
            ("t3", (3, 7), false, imm, inf),
            ("t3", (3, 7), true, imm, inf),
            ("t4", (1, 9), false, inf, imm),
            ("t4", (1, 9), true, inf, imm),
            ("t4", (7, 3), false, inf, imm),
            ("t4", (7, 3), true, inf, imm),
        ];
        for (table, ratio, zipf, wb, rb) in rounds {
            let keys = if zipf {
                KeyDist::Zipfian(p.zipf_theta)
            } else {
                KeyDist::Uniform
            };
            let spec = WorkloadSpec {
                op_count: n,
                ratio,
                keys,
                write_bound: wb,
                read_bound: rb,
                ..self.spec()
            };
            let ops = gen_workload(&spec)?;
            let phase = format!(
                "{table}:{}:{}:{}",
                ratio.0,
                ratio.1,
                if zipf { "zipf" } else { "uniform" }
            );
            let mut c = self.warm_cluster(self.cfg.topology)?;
            let (_, delta) = self.run_phase(
                &mut c,
                &phase,
                split_streams(ops, self.cfg.streams),
                &|_| None,
            )?;
            let total = delta.busy_total() as f64;
            let write: u64 = delta.busy_by_step[1..=18].iter().sum();
            let ops_total = (delta.busy_write_ops + delta.busy_read_ops) as f64;
            let pct = |v: f64, t: f64| (t > 0.0).then(|| (v / t * 1e4).round() / 100.0);
            for a in self
                .report
                .aggregates
                .iter_mut()
                .filter(|a| a.phase == phase)
            {
                a.w_cost_pct = pct(write as f64, total);
                a.r_cost_pct = a.w_cost_pct.map(|w| ((100.0 - w) * 100.0).round() / 100.0);
                a.w_ops_pct = pct(delta.busy_write_ops as f64, ops_total);
            }
        }
        Ok(())
    }
}

/// First read of every group. A stream's ids are consecutive and each
/// group ends with two reads, so the probe is the read right after a write.
fn probe_ids(outcomes: &[OpOutcome]) -> BTreeSet<u64> {
    let reads: BTreeSet<u64> = outcomes
        .iter()
        .filter(|o| !o.is_write)
        .map(|o| o.op.0)
        .collect();
    reads
        .iter()
        .copied()
        .filter(|&id| !reads.contains(&(id - 1)))
        .collect()
}

/// Cost functions of the node that did the most work.
fn costmodel_text(c: &Cluster, phase: &str) -> String {
    let e = c
        .engines()
        .iter()
        .max_by_key(|e| (e.stats().busy_total(), std::cmp::Reverse(e.id())))
        .expect("cluster has nodes");
    format!(
        "# phase {phase} node {}\n{}",
        e.id().0,
        e.model().export_text()
    )
}

pub(crate) fn to_ns(d: Duration) -> u64 {
    d.as_nanos() as u64
}
