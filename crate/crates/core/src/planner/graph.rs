// SPDX-License-Identifier: Apache-2.0

//! The step graph: edges, start and end sets, per-step conditions, and
//! plan validation.
//!
//! Edges always go from a lower to a higher step number, so a path is
//! fully described by its step set.

use super::{Plan, PlanKind, StepId};
use crate::storage::ConditionSet;

const EDGES: &[(u8, u8)] = &[
    (2, 3),
    (2, 4),
    (3, 4),
    (4, 5),
    (4, 6),
    (5, 7),
    (6, 7),
    (7, 8),
    (7, 9),
    (7, 17),
    (7, 18),
    (7, 19),
    (8, 9),
    (9, 10),
    (10, 11),
    (11, 12),
    (12, 13),
    (13, 14),
    (14, 15),
    (14, 16),
    (15, 16),
    (16, 17),
    (16, 18),
    (16, 19),
    (17, 18),
    (17, 19),
    (18, 19),
];

pub const WRITE_STARTS: [u8; 2] = [1, 2];
pub const READ_STARTS: [u8; 6] = [3, 8, 9, 17, 18, 19];
const HOLLOW: [u8; 6] = [1, 7, 16, 17, 18, 19];

pub fn edges() -> &'static [(u8, u8)] {
    EDGES
}

pub fn is_edge(a: u8, b: u8) -> bool {
    EDGES.contains(&(a, b))
}

pub fn legal_start(kind: PlanKind, step: u8) -> bool {
    match kind {
        PlanKind::Write => WRITE_STARTS.contains(&step),
        PlanKind::Read => READ_STARTS.contains(&step),
    }
}

pub fn legal_end(step: u8) -> bool {
    HOLLOW.contains(&step)
}

/// Conditions that must hold before a step runs, as a `ConditionSet`
/// mask (a field set to true is required).
pub fn requirements(step: StepId) -> ConditionSet {
    let mut r = ConditionSet::default();
    match step.get() {
        1 | 2 => r.a = true,
        3 => {
            r.c = true;
            r.g = true;
        }
        5 => {
            r.c = true;
            r.i = true;
        }
        8 => {
            r.c = true;
            r.h = true;
        }
        9 => {
            r.c = true;
            r.e = true;
            r.j = true;
        }
        15 => {
            r.c = true;
            r.d = true;
        }
        4 | 6 | 7 | 10..=14 | 16 => r.c = true,
        17 => r.f = true,
        18 => r.k = true,
        _ => r.b = true,
    }
    r
}

fn satisfied(req: &ConditionSet, have: &ConditionSet) -> bool {
    let pairs = [
        (req.a, have.a),
        (req.b, have.b),
        (req.c, have.c),
        (req.d, have.d),
        (req.e, have.e),
        (req.f, have.f),
        (req.g, have.g),
        (req.h, have.h),
        (req.i, have.i),
        (req.j, have.j),
        (req.k, have.k),
    ];
    pairs.iter().all(|(r, h)| !r || *h)
}

/// Conditions after a step has run: appending to the b-list makes e true,
/// flushing to the b-file makes h true, p-list inserts make f true and
/// execution leaves rows in the cfMap.
pub fn project(conds: &mut ConditionSet, step: u8) {
    match step {
        5 | 8 => conds.e = true,
        6 => conds.h = true,
        14 => conds.f = true,
        17 => conds.k = true,
        _ => {}
    }
}

/// Checks walk structure, start/end sets, conditions along the path and
/// the count couplings.
pub fn validate_plan(plan: &Plan, conds: &ConditionSet) -> bool {
    let steps = plan.step_numbers();
    let (Some(&first), Some(&last)) = (steps.first(), steps.last()) else {
        return false;
    };
    if !legal_start(plan.kind, first) || !legal_end(last) {
        return false;
    }
    if plan.kind == PlanKind::Read && last != 19 {
        return false;
    }
    if plan.kind == PlanKind::Write && plan.has(19) {
        return false;
    }
    if steps.windows(2).any(|w| !is_edge(w[0], w[1])) {
        return false;
    }
    let mut have = *conds;
    for &s in &steps {
        if !satisfied(&requirements(StepId(s)), &have) {
            return false;
        }
        project(&mut have, s);
    }
    counts_consistent(plan)
}

fn counts_consistent(plan: &Plan) -> bool {
    let c = &plan.counts;
    let i = &c.i;
    let r = plan.geometry.r as u64;
    // a count is positive exactly when its step is on the path
    let bound = [
        (1, 1),
        (2, 2),
        (3, 3),
        (4, 4),
        (6, 5),
        (8, 6),
        (9, 7),
        (11, 8),
        (12, 9),
        (14, 11),
        (17, 12),
    ];
    for (step, n) in bound {
        if plan.has(step) != (i[n] > 0) {
            return false;
        }
    }
    if plan.has(5) && i[4] == 0 {
        return false;
    }
    if !plan.has(13) && i[10] != 0 {
        return false;
    }
    let coord = [9, 10, 11, 12, 13, 14, 16];
    let n_coord = coord.iter().filter(|&&s| plan.has(s)).count();
    if n_coord != 0 && n_coord != coord.len() {
        return false;
    }
    if plan.has(9) {
        if i[8] != i[7] || i[9] != r * i[7] || i[11] != r * i[7] || i[10] != (r - 1) * i[7] {
            return false;
        }
        if !plan.has(17) || i[12] < r * i[7] {
            return false;
        }
    }
    if plan.has(3) {
        let extra = u64::from(plan.kind == PlanKind::Write);
        if i[4] != i[3] + extra {
            return false;
        }
    }
    if plan.kind == PlanKind::Write && plan.has(2) && i[2] != 1 {
        return false;
    }
    if plan.has(18) != (c.j1 + c.k1 > 0) || (!plan.has(18) && (c.j1 | c.k1) != 0) {
        return false;
    }
    if plan.has(19) != (c.j2 > 0) || (!plan.has(19) && c.k2 != 0) {
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{Counts, Geometry};

    fn plan(kind: PlanKind, steps: &[u8], f: impl FnOnce(&mut Counts)) -> Plan {
        let mut c = Counts::default();
        f(&mut c);
        Plan::from_steps(kind, steps, c, Geometry::default())
    }

    fn write_conds() -> ConditionSet {
        ConditionSet {
            a: true,
            c: true,
            i: true,
            ..Default::default()
        }
    }

    #[test]
    fn edges_ascend() {
        assert!(edges().iter().all(|(a, b)| a < b));
    }

    #[test]
    fn minimal_write_path_is_legal() {
        let p = plan(PlanKind::Write, &[2, 4, 5, 7], |c| {
            c.i[2] = 1;
            c.i[4] = 1;
        });
        assert!(validate_plan(&p, &write_conds()));
    }

    #[test]
    fn filled_end_is_illegal() {
        let p = plan(PlanKind::Write, &[2, 4, 5, 7, 9, 10], |c| {
            c.i[2] = 1;
            c.i[4] = 1;
            c.i[7] = 1;
        });
        assert!(!validate_plan(&p, &write_conds()));
    }

    #[test]
    fn execution_needs_f() {
        let p = plan(PlanKind::Read, &[17, 19], |c| {
            c.i[12] = 1;
            c.j2 = 1;
        });
        let conds = ConditionSet {
            b: true,
            ..Default::default()
        };
        assert!(!validate_plan(&p, &conds));
        assert!(validate_plan(&p, &ConditionSet { f: true, ..conds }));
    }

    #[test]
    fn coupling_is_checked() {
        let good = |c: &mut Counts| {
            c.i[2] = 1;
            c.i[4] = 1;
            c.i[7] = 2;
            c.i[8] = 2;
            c.i[9] = 6;
            c.i[10] = 4;
            c.i[11] = 6;
            c.i[12] = 6;
        };
        let steps = [2, 4, 5, 7, 9, 10, 11, 12, 13, 14, 16, 17];
        let conds = ConditionSet {
            j: true,
            ..write_conds()
        };
        assert!(validate_plan(&plan(PlanKind::Write, &steps, good), &conds));
        let bad = plan(PlanKind::Write, &steps, |c| {
            good(c);
            c.i[10] = 5;
        });
        assert!(!validate_plan(&bad, &conds));
    }
}
