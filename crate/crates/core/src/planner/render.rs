// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use super::{Binding, Plan};
use crate::costmodel::CostModel;
use crate::model::LatencyBound;

/// One tab-separated line per step (`step`, `stage`, `count`, `est_us`,
/// `description`), then a `response` line and a `total` line with the bound.
pub fn render_plan(plan: &Plan, model: &CostModel, bound: LatencyBound) -> String {
    let mut out = String::from("step\tstage\tcount\test_us\tdescription\n");
    for s in plan.steps() {
        let c = &plan.counts;
        let count = match s.binding() {
            Binding::I(n) => c.i[n].to_string(),
            Binding::One => "1".to_string(),
            Binding::Compact => format!("{}+{}", c.j1, c.k1),
            Binding::Acquire => format!("{}+{}", c.j2, c.k2),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.3}\t{}",
            s.get(),
            s.stage().name(),
            count,
            plan.step_cost_us(model, s),
            s.description()
        );
    }
    let _ = writeln!(
        out,
        "response\t-\t1\t{:.3}\tresponse transfer",
        plan.response_cost_us(model)
    );
    let bound = match bound {
        LatencyBound::Finite(d) => format!("{:.3}", d.as_secs_f64() * 1e6),
        LatencyBound::Infinite => "inf".to_string(),
    };
    let _ = writeln!(
        out,
        "total\t-\t-\t{:.3}\tbound={}",
        plan.total_us(model),
        bound
    );
    out
}
