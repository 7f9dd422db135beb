// SPDX-License-Identifier: Apache-2.0

//! Bench configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use latbound_core::costmodel::CostModelConfig;
use latbound_core::model::stable_hash;
use latbound_core::replication::ReplicationConfig;
use latbound_core::simnet::Topology;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyPreset {
    TwoDc,
    TwoDcLowBandwidth,
}

impl TopologyPreset {
    pub fn build(self) -> Topology {
        match self {
            TopologyPreset::TwoDc => Topology::two_dc(),
            TopologyPreset::TwoDcLowBandwidth => Topology::two_dc_low_bandwidth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    pub bounds_ms: Vec<u64>,
    /// Operations per bound; the read sweep counts its group writes too.
    pub ops_per_bound: usize,
    /// Immediate same-key writes before each bounded read of the read sweep.
    pub writes_per_read: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            bounds_ms: (0..=8).map(|i| i * 25).collect(),
            ops_per_bound: 2000,
            writes_per_read: 99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarwParams {
    pub write_bounds_ms: Vec<u64>,
    pub groups: usize,
    pub writes_per_group: usize,
}

impl Default for VarwParams {
    fn default() -> Self {
        VarwParams {
            write_bounds_ms: vec![0, 25, 50, 75, 100],
            groups: 40,
            writes_per_group: 99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImwParams {
    pub read_bounds_ms: Vec<u64>,
    pub groups: usize,
    pub writes_per_group: usize,
    /// Also run the sweep with unbounded reads.
    pub include_infinite: bool,
}

impl Default for ImwParams {
    fn default() -> Self {
        ImwParams {
            read_bounds_ms: (0..=20).map(|i| i * 10).collect(),
            groups: 24,
            writes_per_group: 98,
            include_infinite: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverheadParams {
    pub invocations: usize,
}

impl Default for OverheadParams {
    fn default() -> Self {
        OverheadParams {
            invocations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixParams {
    pub ops_per_round: usize,
    pub zipf_theta: f64,
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams {
            ops_per_round: 20_000,
            zipf_theta: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    /// Multiplies op, group and preload counts.
    pub scale: f64,
    pub topology: TopologyPreset,
    /// Concurrent closed-loop client streams.
    pub streams: usize,
    /// Inserts run before measuring to train the cost model.
    pub preload: usize,
    pub key_space: usize,
    pub value_size: usize,
    pub zipf_theta: f64,
    /// Cost-model recency decay; `None` keeps the default.
    pub lambda: Option<f64>,
    /// Record message send and deliver events in traces.
    pub trace_messages: bool,
    pub replication: ReplicationConfig,
    pub sweep: SweepParams,
    pub varw: VarwParams,
    pub imw: ImwParams,
    pub overhead: OverheadParams,
    pub mix: MixParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 7,
            scale: 1.0,
            topology: TopologyPreset::TwoDc,
            streams: 8,
            preload: 5000,
            key_space: 10_000,
            value_size: 1024,
            zipf_theta: 0.99,
            lambda: None,
            trace_messages: true,
            replication: ReplicationConfig::default(),
            sweep: SweepParams::default(),
            varw: VarwParams::default(),
            imw: ImwParams::default(),
            overhead: OverheadParams::default(),
            mix: MixParams::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: BenchConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.scale.is_nan() || self.scale <= 0.0 {
            return bad("scale must be positive");
        }
        if self.streams == 0 {
            return bad("streams must be positive");
        }
        if !(self.zipf_theta > 0.0 && self.zipf_theta < 1.0) {
            return bad("zipf_theta must lie in (0, 1)");
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l <= 1.0) {
                return bad("lambda must lie in (0, 1]");
            }
        }
        if self.value_size < 16 {
            return bad("value_size must be at least 16");
        }
        Ok(())
    }

    pub fn scaled(&self, n: usize) -> usize {
        ((n as f64 * self.scale).round() as usize).max(1)
    }

    /// Short digest of the full configuration.
    pub fn digest(&self) -> String {
        format!("{:016x}", stable_hash(self.to_toml().as_bytes()))
    }

    /// Replication settings with the bench-level overrides applied.
    pub fn replication_for(&self, topology: &Topology) -> ReplicationConfig {
        let mut r = self.replication.clone();
        r.seed = self.seed;
        r.trace_messages = self.trace_messages;
        if let Some(l) = self.lambda {
            let mut m = r
                .cost_model
                .clone()
                .unwrap_or_else(|| CostModelConfig::for_topology(topology));
            m.lambda = l;
            r.cost_model = Some(m);
        }
        r
    }
}
