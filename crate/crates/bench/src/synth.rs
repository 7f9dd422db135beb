// SPDX-License-Identifier: Apache-2.0

//! Random planner states for overhead measurement and plan checks.

use std::time::Duration;

use rand::Rng;

use latbound_core::costmodel::{CostKey, CostModel, CostModelConfig};
use latbound_core::model::{LatencyBound, LinkScope};
use latbound_core::planner::{Geometry, PlanInput, PlanKind};
use latbound_core::storage::{ConditionSet, StoreSummary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthState {
    pub kind: PlanKind,
    pub conds: ConditionSet,
    pub summary: StoreSummary,
    pub geometry: Geometry,
    pub bound: LatencyBound,
}

impl SynthState {
    pub fn input<'a>(&self, model: &'a CostModel) -> PlanInput<'a> {
        PlanInput {
            kind: self.kind,
            conds: self.conds,
            summary: self.summary,
            geometry: self.geometry,
            model,
        }
    }
}

fn scope(rng: &mut impl Rng) -> LinkScope {
    LinkScope::ALL[rng.random_range(0..LinkScope::ALL.len())]
}

/// Conditions follow from the drawn counts the way a store derives them;
/// partition state and compaction need are drawn independently.
pub fn random_state(rng: &mut impl Rng, max_pending: usize, all_finite: bool) -> SynthState {
    let kind = if rng.random_bool(0.5) {
        PlanKind::Write
    } else {
        PlanKind::Read
    };
    let cap_b = rng.random_range(1..=max_pending.max(1) * 2);
    let cap_p = rng.random_range(1..=max_pending.max(1) * 4);
    let mut pick = |hi: usize| {
        if rng.random_bool(0.3) {
            0
        } else {
            rng.random_range(0..=hi)
        }
    };
    let b_list = pick(cap_b).min(cap_b);
    let p_list = pick(cap_p).min(cap_p);
    let summary = StoreSummary {
        bl_file: pick(max_pending),
        b_list,
        b_file: pick(max_pending),
        b_list_space: cap_b - b_list,
        t_list: 0,
        p_list,
        p_list_space: cap_p - p_list,
        cf_map_rows: pick(200),
        cf_file_rows: pick(2000),
        cf_files: pick(6),
    };
    let r = [1usize, 3, 3, 3, 5][rng.random_range(0..5)];
    let q = r / 2 + 1;
    let reachable = if rng.random_bool(0.8) {
        r
    } else {
        rng.random_range(1..=r)
    };
    let conds = ConditionSet {
        a: kind == PlanKind::Write,
        b: kind == PlanKind::Read,
        c: reachable >= q,
        d: reachable < r,
        e: summary.b_list > 0,
        f: summary.p_list > 0,
        g: summary.bl_file > 0,
        h: summary.b_file > 0,
        i: summary.b_list_space > 0,
        j: summary.p_list_space > 0,
        k: rng.random_bool(0.5),
    };
    let geometry = Geometry {
        r,
        write_bytes: rng.random_range(64.0..4096.0),
        response_bytes: rng.random_range(32.0..4096.0),
        transmit_scope: scope(rng),
        leader_scope: scope(rng),
        sequence_scope: scope(rng),
        ack_scope: scope(rng),
        client_scope: scope(rng),
        rtw: rng.random_bool(0.1),
    };
    let bound = if !all_finite && rng.random_bool(0.1) {
        LatencyBound::Infinite
    } else if rng.random_bool(0.1) {
        LatencyBound::Finite(Duration::ZERO)
    } else {
        LatencyBound::Finite(Duration::from_micros(rng.random_range(0..200_000)))
    };
    SynthState {
        kind,
        conds,
        summary,
        geometry,
        bound,
    }
}

/// A model with every function perturbed around the defaults.
pub fn random_model(rng: &mut impl Rng) -> CostModel {
    let mut m = CostModel::new(CostModelConfig::default());
    for k in CostKey::ALL {
        let f = *m.function(k);
        let s = |rng: &mut _| rand_scale(rng);
        let (a, b, b2) = (f.a * s(rng), f.b * s(rng), f.b2 * s(rng));
        m.set_function(k, a, b, b2);
    }
    m
}

fn rand_scale(rng: &mut impl Rng) -> f64 {
    rng.random_range(0.5..2.0)
}
