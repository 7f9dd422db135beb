// SPDX-License-Identifier: Apache-2.0

//! Scenario reports and their files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use latbound_core::model::{LatencyBound, Stage};
use latbound_core::replication::{OpOutcome, OpResult};

use crate::stats::{mean, percentile_sorted};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpRow {
    pub phase: String,
    pub op: u64,
    pub kind: String,
    /// Microseconds, empty for unbounded operations.
    pub bound_us: Option<u64>,
    pub latency_us: u64,
    pub outcome: String,
    pub node: u32,
    pub issued_us: u64,
    pub done_us: u64,
    pub stages: String,
}

impl OpRow {
    pub fn from_outcome(phase: &str, o: &OpOutcome) -> Self {
        OpRow {
            phase: phase.to_string(),
            op: o.op.0,
            kind: if o.is_write { "write" } else { "read" }.into(),
            bound_us: match o.bound {
                LatencyBound::Finite(d) => Some(d.as_micros() as u64),
                LatencyBound::Infinite => None,
            },
            latency_us: o.latency.as_micros() as u64,
            outcome: match &o.result {
                OpResult::Ack => "Ack".into(),
                OpResult::Value(_) => "Value".into(),
                OpResult::Null => "Null".into(),
                OpResult::Failed(e) => format!("Failed: {e}"),
            },
            node: o.node.0,
            issued_us: o.issued / 1000,
            done_us: o.done / 1000,
            stages: o
                .stages
                .iter()
                .map(|s: &Stage| s.name())
                .collect::<Vec<_>>()
                .join("|"),
        }
    }

    pub fn is_value(&self) -> bool {
        self.outcome == "Value"
    }
}

/// Summary of one phase, or one kind of operation within it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggRow {
    pub phase: String,
    /// `write`, `read` or `all`.
    pub kind: String,
    pub count: usize,
    pub mean_us: u64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
    pub throughput_ops_s: f64,
    pub values: usize,
    pub nulls: usize,
    pub failed: usize,
    /// Busy time of steps 1-18 over all busy time, percent.
    pub w_cost_pct: Option<f64>,
    pub r_cost_pct: Option<f64>,
    /// Busy time spent inside write operations over time inside any
    /// operation, percent.
    pub w_ops_pct: Option<f64>,
}

impl AggRow {
    /// Aggregates rows; throughput spans first issue to last response.
    pub fn from_rows(phase: &str, kind: &str, rows: &[&OpRow]) -> Option<Self> {
        if rows.is_empty() {
            return None;
        }
        let mut lat: Vec<u64> = rows.iter().map(|r| r.latency_us).collect();
        lat.sort_unstable();
        let first = rows.iter().map(|r| r.issued_us).min().unwrap_or(0);
        let last = rows.iter().map(|r| r.done_us).max().unwrap_or(0);
        let span_s = (last.saturating_sub(first)) as f64 / 1e6;
        let p = |q| percentile_sorted(&lat, q).unwrap_or(0);
        Some(AggRow {
            phase: phase.to_string(),
            kind: kind.to_string(),
            count: rows.len(),
            mean_us: mean(&lat).unwrap_or(0.0).round() as u64,
            p50_us: p(50.0),
            p95_us: p(95.0),
            p99_us: p(99.0),
            throughput_ops_s: if span_s > 0.0 {
                (rows.len() as f64 / span_s * 100.0).round() / 100.0
            } else {
                0.0
            },
            values: rows.iter().filter(|r| r.is_value()).count(),
            nulls: rows.iter().filter(|r| r.outcome == "Null").count(),
            failed: rows
                .iter()
                .filter(|r| r.outcome.starts_with("Failed"))
                .count(),
            w_cost_pct: None,
            r_cost_pct: None,
            w_ops_pct: None,
        })
    }

    /// `all`, `write` and `read` rows of one phase.
    pub fn for_phase(phase: &str, rows: &[OpRow]) -> Vec<AggRow> {
        let mine: Vec<&OpRow> = rows.iter().filter(|r| r.phase == phase).collect();
        let mut out = Vec::new();
        out.extend(Self::from_rows(phase, "all", &mine));
        for kind in ["write", "read"] {
            let k: Vec<&OpRow> = mine.iter().copied().filter(|r| r.kind == kind).collect();
            out.extend(Self::from_rows(phase, kind, &k));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    pub rows: Vec<OpRow>,
    pub aggregates: Vec<AggRow>,
    pub trace_tsv: String,
    pub costmodel: String,
    /// Extra CSV files by name.
    pub extra: Vec<(String, String)>,
    /// Oracle violations across all phases.
    pub violations: Vec<String>,
    pub oracle_checks: u64,
}

impl ScenarioReport {
    pub fn aggregate(&self, phase: &str, kind: &str) -> Option<&AggRow> {
        self.aggregates
            .iter()
            .find(|a| a.phase == phase && a.kind == kind)
    }

    pub fn phases(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for a in &self.aggregates {
            if !seen.contains(&a.phase) {
                seen.push(a.phase.clone());
            }
        }
        seen
    }

    pub fn ops_csv(&self) -> String {
        to_csv(&self.rows)
    }

    pub fn aggregates_csv(&self) -> String {
        to_csv(&self.aggregates)
    }

    /// Writes `ops.csv`, `aggregates.csv`, `trace.tsv`, `costmodel.txt`
    /// and any extra files into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ops.csv"), self.ops_csv())?;
        std::fs::write(dir.join("aggregates.csv"), self.aggregates_csv())?;
        std::fs::write(dir.join("trace.tsv"), &self.trace_tsv)?;
        std::fs::write(dir.join("costmodel.txt"), &self.costmodel)?;
        for (name, body) in &self.extra {
            std::fs::write(dir.join(name), body)?;
        }
        let meta = format!(
            "scenario = \"{}\"\nseed = {}\nconfig_digest = \"{}\"\noracle_checks = {}\nviolations = {}\n",
            self.scenario,
            self.seed,
            self.config_digest,
            self.oracle_checks,
            self.violations.len()
        );
        std::fs::write(dir.join("run.toml"), meta)
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("csv is utf-8")
}
