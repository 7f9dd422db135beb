// SPDX-License-Identifier: Apache-2.0

//! Step graph and the latency-bounded path planner.
//!
//! A plan is a walk through the 19-step graph plus a count for every step
//! on it. The planner seeds a minimal path, then extends it tier by tier
//! (execute, coordinate, transmit, compact) while the estimated path cost
//! plus the response transfer stays within the bound.

mod dcon;
mod graph;
mod render;

pub use dcon::{dcon, pre_dcon, PlanEstimate, PlanInput, PlannerBudget, MSG_HEADER_BYTES};
pub use graph::{
    edges, is_edge, legal_end, legal_start, project, requirements, validate_plan, READ_STARTS,
    WRITE_STARTS,
};
pub use render::render_plan;

use serde::{Deserialize, Serialize};

use crate::costmodel::{CostKey, CostKind, CostModel};
use crate::model::{LinkScope, Stage};

/// A step of the 19-step table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StepId(u8);

/// Which count a step consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    /// One of `i1..i12`.
    I(usize),
    /// A single acknowledgement.
    One,
    /// `(j1, k1)` compaction rows.
    Compact,
    /// `(j2, k2)` acquisition rows.
    Acquire,
}

impl StepId {
    pub fn new(n: u8) -> Option<StepId> {
        (1..=19).contains(&n).then_some(StepId(n))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = StepId> {
        (1..=19).map(StepId)
    }

    pub fn stage(self) -> Stage {
        match self.0 {
            1 | 2 => Stage::Reception,
            3..=7 => Stage::Transmission,
            8..=16 => Stage::Coordination,
            17 => Stage::Execution,
            18 => Stage::Compaction,
            _ => Stage::Acquisition,
        }
    }

    pub fn kind(self) -> CostKind {
        match self.0 {
            1 | 6 | 15 => CostKind::Fd,
            2 | 5 | 10 => CostKind::Fa,
            3 | 8 => CostKind::Fr,
            4 | 7 | 9 | 11 | 13 | 16 => CostKind::Ft,
            12 => CostKind::Fc,
            14 => CostKind::Fi,
            17 => CostKind::Fe,
            18 => CostKind::FC,
            _ => CostKind::FR,
        }
    }

    pub fn binding(self) -> Binding {
        match self.0 {
            1 => Binding::I(1),
            2 => Binding::I(2),
            3 => Binding::I(3),
            4 | 5 => Binding::I(4),
            6 => Binding::I(5),
            7 | 16 => Binding::One,
            8 => Binding::I(6),
            9 | 10 => Binding::I(7),
            11 => Binding::I(8),
            12 => Binding::I(9),
            13 => Binding::I(10),
            14 | 15 => Binding::I(11),
            17 => Binding::I(12),
            18 => Binding::Compact,
            _ => Binding::Acquire,
        }
    }

    pub fn description(self) -> &'static str {
        match self.0 {
            1 => "flush writes to bl-file",
            2 => "append writes to b-list",
            3 => "read writes from bl-file",
            4 => "transmit writes",
            5 => "append writes to b-list",
            6 => "flush writes to b-file",
            7 => "transmit ack",
            8 => "read writes from b-file",
            9 => "transmit writes from b-list",
            10 => "append writes to t-list",
            11 => "transmit writes",
            12 => "align writes",
            13 => "transmit writes",
            14 => "insert writes into p-list",
            15 => "flush writes to p-file",
            16 => "transmit ack",
            17 => "execute writes",
            18 => "compact rows",
            _ => "read rows",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanKind {
    Write,
    Read,
}

/// Per-step counts. `i[0]` is unused so `i[n]` is `i_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub i: [u64; 13],
    pub j1: u64,
    pub k1: u64,
    pub j2: u64,
    pub k2: u64,
}

/// Where each transmitting step sends, and the sizes involved. Filled from
/// the replica set and recent traffic so transmit estimates use the right
/// link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub r: usize,
    /// Mean encoded write size.
    pub write_bytes: f64,
    /// Response payload: an ack for writes, the expected result for reads.
    pub response_bytes: f64,
    /// Steps 4 and 7: the farthest peer of the quorum.
    pub transmit_scope: LinkScope,
    /// Step 9: receiving node to coordination leader.
    pub leader_scope: LinkScope,
    /// Step 13: leader to its farthest participant.
    pub sequence_scope: LinkScope,
    /// Step 16: farthest participant back to the receiving node.
    pub ack_scope: LinkScope,
    /// Response to the requester.
    pub client_scope: LinkScope,
    /// Estimate step 17 with the read-test-write kind as well.
    pub rtw: bool,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            r: 3,
            write_bytes: 128.0,
            response_bytes: MSG_HEADER_BYTES,
            transmit_scope: LinkScope::Datacenter,
            leader_scope: LinkScope::Remote,
            sequence_scope: LinkScope::Remote,
            ack_scope: LinkScope::Remote,
            client_scope: LinkScope::Rack,
            rtw: false,
        }
    }
}

impl Geometry {
    fn kib(&self, writes: u64) -> f64 {
        (MSG_HEADER_BYTES + writes as f64 * self.write_bytes) / 1024.0
    }

    /// Units of the response transfer, in KiB.
    pub fn response_kib(&self) -> f64 {
        self.response_bytes / 1024.0
    }
}

/// One summand of a plan's cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerm {
    pub step: StepId,
    pub key: CostKey,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub kind: PlanKind,
    mask: u32,
    pub counts: Counts,
    pub geometry: Geometry,
    /// Estimated path cost plus response transfer, microseconds.
    pub budget_used_us: f64,
}

impl Plan {
    pub fn empty(kind: PlanKind, geometry: Geometry) -> Self {
        Plan {
            kind,
            mask: 0,
            counts: Counts::default(),
            geometry,
            budget_used_us: 0.0,
        }
    }

    /// Builds a plan from explicit steps (any order) and counts.
    pub fn from_steps(kind: PlanKind, steps: &[u8], counts: Counts, geometry: Geometry) -> Self {
        let mut p = Plan::empty(kind, geometry);
        for &s in steps {
            p.add(s);
        }
        p.counts = counts;
        p
    }

    pub fn has(&self, step: u8) -> bool {
        self.mask & (1 << step) != 0
    }

    pub fn add(&mut self, step: u8) {
        debug_assert!((1..=19).contains(&step));
        self.mask |= 1 << step;
    }

    pub fn remove(&mut self, step: u8) {
        self.mask &= !(1 << step);
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    /// Steps in path order.
    pub fn steps(&self) -> Vec<StepId> {
        StepId::all().filter(|s| self.has(s.0)).collect()
    }

    pub fn step_numbers(&self) -> Vec<u8> {
        self.steps().into_iter().map(|s| s.0).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn stages(&self) -> std::collections::BTreeSet<Stage> {
        self.steps().into_iter().map(|s| s.stage()).collect()
    }

    /// Count a step consumes as `(x, y)`; transmit steps in KiB.
    pub fn units(&self, step: StepId) -> (f64, f64) {
        let c = &self.counts;
        let g = &self.geometry;
        match step.binding() {
            Binding::One => (g.kib(0), 0.0),
            Binding::Compact => (c.j1 as f64, c.k1 as f64),
            Binding::Acquire => (c.j2 as f64, c.k2 as f64),
            Binding::I(n) => {
                let v = c.i[n];
                if step.kind() == CostKind::Ft {
                    (g.kib(v), 0.0)
                } else {
                    (v as f64, 0.0)
                }
            }
        }
    }

    pub fn cost_key(&self, step: StepId) -> CostKey {
        let g = &self.geometry;
        match step.0 {
            4 | 7 => CostKey::transmit(g.transmit_scope),
            9 => CostKey::transmit(g.leader_scope),
            11 => CostKey::transmit(LinkScope::Local),
            13 => CostKey::transmit(g.sequence_scope),
            16 => CostKey::transmit(g.ack_scope),
            _ => CostKey::of(step.kind()),
        }
    }

    pub fn cost_terms(&self) -> Vec<CostTerm> {
        self.steps()
            .into_iter()
            .map(|s| {
                let (x, y) = self.units(s);
                CostTerm {
                    step: s,
                    key: self.cost_key(s),
                    x,
                    y,
                }
            })
            .collect()
    }

    /// Estimated cost of one step, microseconds.
    pub fn step_cost_us(&self, model: &CostModel, step: StepId) -> f64 {
        let (x, y) = self.units(step);
        let key = self.cost_key(step);
        let base = model.estimate_us(key, x, y);
        if step.0 == 17 && self.geometry.rtw {
            base.max(model.estimate_us(CostKey::of(CostKind::FeRtw), x, y))
        } else {
            base
        }
    }

    /// Path cost, microseconds.
    pub fn cost_us(&self, model: &CostModel) -> f64 {
        let mut m = self.mask >> 1;
        let mut s = 1u8;
        let mut total = 0.0;
        while m != 0 {
            if m & 1 != 0 {
                total += self.step_cost_us(model, StepId(s));
            }
            m >>= 1;
            s += 1;
        }
        total
    }

    /// Estimated response transfer `f_t(s)`, microseconds.
    pub fn response_cost_us(&self, model: &CostModel) -> f64 {
        model.estimate_us(
            CostKey::transmit(self.geometry.client_scope),
            self.geometry.response_kib(),
            0.0,
        )
    }

    /// Path cost plus response transfer, microseconds.
    pub fn total_us(&self, model: &CostModel) -> f64 {
        self.cost_us(model) + self.response_cost_us(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::CostModelConfig;

    #[test]
    fn table_assignments() {
        let s = |n| StepId::new(n).unwrap();
        assert_eq!(s(1).kind(), CostKind::Fd);
        assert_eq!(s(12).stage(), Stage::Coordination);
        assert_eq!(s(17).stage(), Stage::Execution);
        assert_eq!(s(15).binding(), Binding::I(11));
        assert!(StepId::new(0).is_none() && StepId::new(20).is_none());
        let kinds: std::collections::BTreeSet<_> = StepId::all().map(|s| s.kind()).collect();
        assert_eq!(kinds.len(), 9);
    }

    #[test]
    fn empty_plan_costs_nothing() {
        let m = CostModel::new(CostModelConfig::default());
        let p = Plan::empty(PlanKind::Write, Geometry::default());
        assert_eq!(m.path_cost_us(&p), 0.0);
        assert_eq!(p.cost_us(&m), 0.0);
    }

    #[test]
    fn single_append_term() {
        let mut m = CostModel::new(CostModelConfig::default());
        m.set_function(CostKey::of(CostKind::Fa), 1.0, 1.0, 0.0);
        let mut c = Counts::default();
        c.i[2] = 3;
        let p = Plan::from_steps(PlanKind::Write, &[2], c, Geometry::default());
        assert_eq!(m.path_cost_us(&p), 4.0);
        assert_eq!(p.cost_us(&m), 4.0);
    }
}
