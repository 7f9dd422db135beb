// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::graph::project;
use super::{Geometry, Plan, PlanKind};
use crate::costmodel::CostModel;
use crate::model::LatencyBound;
use crate::storage::{ConditionSet, StoreSummary};

/// Fixed per-message header on the wire.
pub const MSG_HEADER_BYTES: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerBudget {
    pub t_r: LatencyBound,
}

/// Intermediate counts of one planning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanEstimate {
    pub m_e: u64,
    pub m_c: u64,
    pub m_t: u64,
    pub m_z: u64,
}

/// Everything the planner reads. All of it is a snapshot.
#[derive(Debug, Clone, Copy)]
pub struct PlanInput<'a> {
    pub kind: PlanKind,
    pub conds: ConditionSet,
    pub summary: StoreSummary,
    pub geometry: Geometry,
    pub model: &'a CostModel,
}

/// Largest `n` in `1..=hi` with `fits(n)`, or 0. `fits` must be monotone.
fn largest_fitting(hi: u64, mut fits: impl FnMut(u64) -> bool) -> u64 {
    if hi == 0 || !fits(1) {
        return 0;
    }
    let (mut lo, mut hi) = (1, hi);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Seeds the minimal path for the request and hands the remaining budget
/// to [`dcon`].
pub fn pre_dcon(budget: &PlannerBudget, input: &PlanInput) -> (Plan, PlanEstimate) {
    let mut plan = Plan::empty(input.kind, input.geometry);
    match input.kind {
        PlanKind::Write if !input.conds.c => {
            plan.add(1);
            plan.counts.i[1] = 1;
            plan.budget_used_us = plan.total_us(input.model);
            return (plan, PlanEstimate::default());
        }
        PlanKind::Write => {
            plan.add(2);
            plan.add(4);
            plan.add(7);
            plan.counts.i[2] = 1;
            plan.counts.i[4] = 1;
            if input.conds.i {
                plan.add(5);
            } else {
                plan.add(6);
                plan.counts.i[5] = 1;
            }
        }
        PlanKind::Read => {
            plan.add(19);
            plan.counts.j2 = 1;
            plan.counts.k2 = input.summary.cf_files as u64;
        }
    }
    let seed = plan.total_us(input.model);
    let t_p = match budget.t_r {
        LatencyBound::Infinite => None,
        LatencyBound::Finite(d) => Some((d.as_secs_f64() * 1e6 - seed).max(0.0)),
    };
    dcon(t_p, plan, input)
}

/// Extends `seed` within `t_p` microseconds beyond its own cost (`None` is
/// unbounded). Tiers, in priority order: execute p-list writes, coordinate
/// buffered writes, transmit bl-file writes, compact.
pub fn dcon(t_p: Option<f64>, seed: Plan, input: &PlanInput) -> (Plan, PlanEstimate) {
    let model = input.model;
    let s = &input.summary;
    let r = input.geometry.r.max(1) as u64;
    let write = input.kind == PlanKind::Write;
    let limit = t_p.map(|t| seed.total_us(model) + t);
    let fits = |p: &Plan| limit.is_none_or(|l| p.total_us(model) <= l + 1e-9);
    let mut plan = seed;
    let mut est = PlanEstimate::default();

    let mut conds = input.conds;
    for st in plan.step_numbers() {
        project(&mut conds, st);
    }

    // writes the seed itself placed in the b-list or b-file
    let in_blist = s.b_list as u64 + u64::from(write && plan.has(5));
    let in_bfile = if conds.h {
        s.b_file as u64 + u64::from(write && plan.has(6))
    } else {
        0
    };
    let blist_space = (s.b_list_space as u64).saturating_sub(u64::from(write && plan.has(5)));
    let tier3_ok = conds.c && conds.g && conds.i && blist_space > 0 && s.bl_file > 0;
    let tier3_max = (s.bl_file as u64).min(blist_space);

    // 1: execute coordinated writes
    let mut e1 = 0;
    if conds.f {
        let hi = s.p_list as u64;
        let cand = |n: u64| {
            let mut p = plan.clone();
            p.add(17);
            p.counts.i[12] = n;
            p
        };
        e1 = if limit.is_none() {
            hi
        } else {
            largest_fitting(hi, |n| fits(&cand(n)))
        };
        est.m_e = e1;
        if e1 > 0 {
            plan = cand(e1);
        }
    }

    // 2: coordinate buffered writes, executing the result
    // (an unbounded plan also coordinates what step 3 brings in)
    let carried = if limit.is_none() && tier3_ok {
        tier3_max
    } else {
        0
    };
    let e_now = conds.e || carried > 0;
    if conds.c && e_now && conds.j {
        let avail = in_blist + in_bfile + carried;
        let cap = avail.min(s.p_list_space as u64 / r);
        let listed = in_blist + carried;
        let with_d = conds.d;
        let cand = |n: u64| {
            let mut p = plan.clone();
            if n > listed {
                p.add(8);
                p.counts.i[6] = n - listed;
            }
            let c = &mut p.counts;
            c.i[7] = n;
            c.i[8] = n;
            c.i[9] = r * n;
            c.i[10] = (r - 1) * n;
            c.i[11] = r * n;
            c.i[12] = e1 + r * n;
            for st in [9, 10, 11, 12, 13, 14, 16, 17] {
                p.add(st);
            }
            if with_d {
                p.add(15);
            }
            p
        };
        let n = if limit.is_none() {
            cap
        } else {
            largest_fitting(cap, |n| fits(&cand(n)))
        };
        est.m_c = r * n;
        if n > 0 {
            plan = cand(n);
            project(&mut conds, 14);
            project(&mut conds, 17);
        }
    }

    // 3: transmit bl-file writes
    if tier3_ok {
        let cand = |n: u64| {
            let mut p = plan.clone();
            p.add(3);
            p.counts.i[3] = n;
            if write {
                p.counts.i[4] = 1 + n;
            } else {
                for st in [4, 5, 7] {
                    p.add(st);
                }
                p.counts.i[4] = n;
            }
            p
        };
        let n = if limit.is_none() {
            tier3_max
        } else {
            largest_fitting(tier3_max, |n| fits(&cand(n)))
        };
        est.m_t = n;
        if n > 0 {
            plan = cand(n);
        }
    }

    // 4: compaction, all or nothing
    if conds.k || plan.has(17) {
        let mut p = plan.clone();
        p.add(18);
        p.counts.j1 = s.cf_map_rows as u64 + p.counts.i[12];
        p.counts.k1 = s.cf_file_rows as u64;
        if p.counts.j1 + p.counts.k1 == 0 {
            p.counts.k1 = 1;
        }
        if fits(&p) {
            est.m_z = 1;
            plan = p;
        }
    }

    plan.budget_used_us = plan.total_us(model);
    (plan, est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{CostKey, CostKind, CostModelConfig};
    use crate::planner::validate_plan;
    use std::time::Duration;

    fn model() -> CostModel {
        CostModel::new(CostModelConfig::default())
    }

    fn healthy_write() -> ConditionSet {
        ConditionSet {
            a: true,
            c: true,
            i: true,
            j: true,
            ..Default::default()
        }
    }

    fn input(
        kind: PlanKind,
        conds: ConditionSet,
        summary: StoreSummary,
        m: &CostModel,
    ) -> PlanInput<'_> {
        PlanInput {
            kind,
            conds,
            summary,
            geometry: Geometry::default(),
            model: m,
        }
    }

    fn full_summary() -> StoreSummary {
        StoreSummary {
            bl_file: 5,
            b_list: 4,
            b_file: 3,
            b_list_space: 100,
            t_list: 0,
            p_list: 6,
            p_list_space: 1000,
            cf_map_rows: 2,
            cf_file_rows: 50,
            cf_files: 2,
        }
    }

    #[test]
    fn zero_bound_write_is_minimal() {
        let m = model();
        let b = PlannerBudget {
            t_r: LatencyBound::millis(0),
        };
        let (p, _) = pre_dcon(
            &b,
            &input(PlanKind::Write, healthy_write(), full_summary(), &m),
        );
        assert_eq!(p.step_numbers(), vec![2, 4, 5, 7]);
        assert_eq!((p.counts.i[4], p.counts.i[2]), (1, 1));
        let no_space = ConditionSet {
            i: false,
            ..healthy_write()
        };
        let (p, _) = pre_dcon(&b, &input(PlanKind::Write, no_space, full_summary(), &m));
        assert_eq!(p.step_numbers(), vec![2, 4, 6, 7]);
        let cut = ConditionSet {
            c: false,
            ..healthy_write()
        };
        let (p, _) = pre_dcon(&b, &input(PlanKind::Write, cut, full_summary(), &m));
        assert_eq!(p.step_numbers(), vec![1]);
    }

    #[test]
    fn unbounded_extremes() {
        let m = model();
        let b = PlannerBudget {
            t_r: LatencyBound::Infinite,
        };
        let mut conds = ConditionSet::all_true_write();
        conds.d = false;
        let (p, _) = pre_dcon(&b, &input(PlanKind::Write, conds, full_summary(), &m));
        assert_eq!(
            p.step_numbers(),
            vec![2, 3, 4, 5, 7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 18]
        );
        assert!(validate_plan(&p, &conds));
        let mut conds = ConditionSet::all_true_read();
        conds.d = false;
        let (p, _) = pre_dcon(&b, &input(PlanKind::Read, conds, full_summary(), &m));
        assert_eq!(
            p.step_numbers(),
            vec![3, 4, 5, 7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 18, 19]
        );
        assert!(validate_plan(&p, &conds));
    }

    #[test]
    fn zero_remaining_budget_keeps_seed() {
        let m = model();
        let mut seed = Plan::empty(PlanKind::Read, Geometry::default());
        seed.add(19);
        seed.counts.j2 = 1;
        let conds = ConditionSet::all_true_read();
        let (p, _) = dcon(
            Some(0.0),
            seed.clone(),
            &input(PlanKind::Read, conds, full_summary(), &m),
        );
        assert_eq!(p.step_numbers(), seed.step_numbers());
        assert_eq!(p.counts, seed.counts);
    }

    #[test]
    fn execution_count_matches_exhaustive_search() {
        let mut m = model();
        m.set_function(CostKey::of(CostKind::Fe), 100.0, 50.0, 0.0);
        let conds = ConditionSet {
            b: true,
            f: true,
            ..Default::default()
        };
        let summary = StoreSummary {
            p_list: 10,
            ..Default::default()
        };
        let inp = input(PlanKind::Read, conds, summary, &m);
        let mut seed = Plan::empty(PlanKind::Read, Geometry::default());
        seed.add(19);
        seed.counts.j2 = 1;
        let base = seed.total_us(&m);
        // room for exactly six executions
        let t_p = 100.0 + 50.0 * 6.0 + 1.0;
        let (p, est) = dcon(Some(t_p), seed, &inp);
        let oracle = (0..=10u64)
            .filter(|&n| n == 0 || 100.0 + 50.0 * n as f64 <= t_p)
            .max()
            .unwrap();
        assert_eq!(oracle, 6);
        assert_eq!(p.counts.i[12], 6);
        assert_eq!(est.m_e, 6);
        assert_eq!(p.step_numbers(), vec![17, 19]);
        assert!(p.total_us(&m) <= base + t_p);
    }

    #[test]
    fn budget_is_respected() {
        let m = model();
        let conds = ConditionSet::all_true_write();
        for ms in [0u64, 1, 5, 12, 25, 40, 80, 200] {
            let b = PlannerBudget {
                t_r: LatencyBound::Finite(Duration::from_millis(ms)),
            };
            let (p, _) = pre_dcon(&b, &input(PlanKind::Write, conds, full_summary(), &m));
            assert!(validate_plan(&p, &conds), "{ms}ms: {:?}", p.step_numbers());
            let mut seed = Plan::empty(PlanKind::Write, Geometry::default());
            for s in [2, 4, 5, 7] {
                seed.add(s);
            }
            seed.counts.i[2] = 1;
            seed.counts.i[4] = 1;
            let bound = (ms as f64 * 1000.0).max(seed.total_us(&m));
            assert!(p.total_us(&m) <= bound + 1e-6);
        }
    }
}
