// SPDX-License-Identifier: Apache-2.0

//! Workloads, experiment scenarios and reports for the latency-bounded
//! store simulator.

pub mod config;
pub mod report;
pub mod scenarios;
pub mod stats;
pub mod synth;
pub mod workload;

pub use config::{BenchConfig, ConfigError, TopologyPreset};
pub use report::{AggRow, OpRow, ScenarioReport};
pub use scenarios::{run_scenario, BenchError, SCENARIOS};
pub use stats::{percentile, StatsError};
pub use workload::{gen_workload, GroupShape, KeyDist, WorkloadError, WorkloadSpec};
