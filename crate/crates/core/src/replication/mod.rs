// SPDX-License-Identifier: Apache-2.0

//! Node engines, the coordination protocol, and a simulated cluster.
//!
//! Every node runs a [`NodeEngine`]. A request is planned against the
//! receiving replica's state and then carried through the planned steps:
//! reception, transmission to peers, coordination of a total order by a
//! rotating leader, execution, compaction and acquisition. The response
//! goes out after the last planned step.
//!
//! [`Cluster`] wires engines to the simulator, drives closed-loop client
//! streams and checks every run with an [`Oracle`].

mod align;
mod cluster;
mod engine;
mod messages;
mod oracle;
mod reliability;

pub use align::{align, Aligned};
pub use cluster::{Cluster, ClusterError, OpOutcome, OpResult, StreamOp};
pub use engine::{Ctx, Effect, EngineStats, Env, NodeEngine};
pub use messages::{request_size, response_size, CatchUpBody, Message, HEADER};
pub use oracle::{Oracle, Violation, ViolationKind};
pub use reliability::{
    reliable_replica_count, system_failure, HalfRounding, ReliabilityError, ReliabilityQuery,
};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::CostModelConfig;
use crate::model::TabletId;
use crate::simnet::HardwareProfile;
use crate::storage::StorageConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplicationError {
    #[error("no replica of {0} is reachable")]
    NoReplicaReachable(TabletId),
    #[error("no peer could serve catch-up for {0}")]
    PeerUnavailable(TabletId),
    #[error("coordination for {0} abandoned; fallback signaled")]
    LeaderFailed(TabletId),
    /// The receiving node crashed before responding.
    #[error("receiving node crashed")]
    Lost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicationConfig {
    pub replicas: usize,
    pub storage: StorageConfig,
    /// `None` derives priors from the topology.
    pub cost_model: Option<CostModelConfig>,
    pub hardware: HardwareProfile,
    /// Clock skew bound.
    pub skew: Duration,
    pub seed: u64,
    /// A node is idle after this long without requests or messages.
    pub idle_window: Duration,
    /// Planning budget of background work on idle nodes.
    pub background_budget: Duration,
    /// Waiting longer than this for transmission acks falls back to the
    /// local bl-file.
    pub transmit_timeout: Duration,
    /// A coordination round still open after this is abandoned.
    pub round_timeout: Duration,
    /// Rejections tolerated before a round is abandoned.
    pub coord_retries: u32,
    /// Upper bound on replanning rounds of one consistent operation.
    pub consistent_rounds: u32,
    /// Record send/deliver events in the trace.
    pub trace_messages: bool,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        ReplicationConfig {
            replicas: 3,
            storage: StorageConfig::default(),
            cost_model: None,
            hardware: HardwareProfile::default(),
            skew: Duration::from_millis(1),
            seed: 1,
            idle_window: Duration::from_millis(50),
            background_budget: Duration::from_millis(100),
            transmit_timeout: Duration::from_millis(90),
            round_timeout: Duration::from_millis(250),
            coord_retries: 3,
            consistent_rounds: 64,
            trace_messages: true,
        }
    }
}
