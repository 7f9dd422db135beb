// SPDX-License-Identifier: Apache-2.0

//! Per-node linear step-cost functions learned from runtime samples.
//!
//! Each cost key keeps a bounded sample buffer. Every `refit_every` samples
//! (or when the buffer is full) a recency-weighted least-squares fit replaces
//! the live parameters and the buffer is cleared. Until the first successful
//! fit a key answers with its configured prior.

mod fit;

pub use fit::{fit_bivariate, fit_univariate, Fit, WeightedSample};

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LinkScope;
use crate::planner::Plan;
use crate::simnet::{LinearCost, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CostKind {
    /// Disk flush.
    Fd,
    /// In-memory list append.
    Fa,
    /// File read.
    Fr,
    /// Transmission; `x` is kibibytes on the wire.
    Ft,
    /// Alignment of writes at the coordination leader.
    Fc,
    /// Pending-list insert.
    Fi,
    /// Execution of plain writes.
    Fe,
    /// Compaction; `x` = cfMap rows, `y` = cfFile rows.
    FC,
    /// Acquisition; `x` = cfMap lookups, `y` = cfFiles searched.
    FR,
    /// Execution of read-test-writes. Falls back to `Fe` until it has a fit
    /// or an explicit prior.
    FeRtw,
}

impl CostKind {
    pub const NINE: [CostKind; 9] = [
        CostKind::Fd,
        CostKind::Fa,
        CostKind::Fr,
        CostKind::Ft,
        CostKind::Fc,
        CostKind::Fi,
        CostKind::Fe,
        CostKind::FC,
        CostKind::FR,
    ];

    pub fn is_bivariate(self) -> bool {
        matches!(self, CostKind::FC | CostKind::FR)
    }

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Fd => "fd",
            CostKind::Fa => "fa",
            CostKind::Fr => "fr",
            CostKind::Ft => "ft",
            CostKind::Fc => "fc",
            CostKind::Fi => "fi",
            CostKind::Fe => "fe",
            CostKind::FC => "fC",
            CostKind::FR => "fR",
            CostKind::FeRtw => "fe_rtw",
        }
    }

    fn from_name(s: &str) -> Option<CostKind> {
        CostKind::NINE
            .into_iter()
            .chain([CostKind::FeRtw])
            .find(|k| k.name() == s)
    }
}

/// A cost function slot: the kind, and for transmissions the link scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CostKey {
    pub kind: CostKind,
    pub scope: LinkScope,
}

impl CostKey {
    pub const fn of(kind: CostKind) -> Self {
        CostKey {
            kind,
            scope: LinkScope::Local,
        }
    }

    pub const fn transmit(scope: LinkScope) -> Self {
        CostKey {
            kind: CostKind::Ft,
            scope,
        }
    }

    pub const ALL: [CostKey; 13] = [
        CostKey::of(CostKind::Fd),
        CostKey::of(CostKind::Fa),
        CostKey::of(CostKind::Fr),
        CostKey::of(CostKind::Fc),
        CostKey::of(CostKind::Fi),
        CostKey::of(CostKind::Fe),
        CostKey::of(CostKind::FC),
        CostKey::of(CostKind::FR),
        CostKey::of(CostKind::FeRtw),
        CostKey::transmit(LinkScope::Local),
        CostKey::transmit(LinkScope::Rack),
        CostKey::transmit(LinkScope::Datacenter),
        CostKey::transmit(LinkScope::Remote),
    ];

    fn slot(self) -> usize {
        match self.kind {
            CostKind::Fd => 0,
            CostKind::Fa => 1,
            CostKind::Fr => 2,
            CostKind::Fc => 3,
            CostKind::Fi => 4,
            CostKind::Fe => 5,
            CostKind::FC => 6,
            CostKind::FR => 7,
            CostKind::FeRtw => 8,
            CostKind::Ft => 9 + self.scope.hops() as usize,
        }
    }

    pub fn label(self) -> String {
        if self.kind == CostKind::Ft {
            format!("ft.{}", self.scope.name())
        } else {
            self.kind.name().to_string()
        }
    }

    fn from_label(s: &str) -> Option<CostKey> {
        if let Some(scope) = s.strip_prefix("ft.") {
            LinkScope::ALL
                .into_iter()
                .find(|l| l.name() == scope)
                .map(CostKey::transmit)
        } else {
            CostKind::from_name(s)
                .filter(|k| *k != CostKind::Ft)
                .map(CostKey::of)
        }
    }
}

impl From<CostKind> for CostKey {
    fn from(k: CostKind) -> Self {
        CostKey::of(k)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("step {0} has no cost kind")]
    UnmappedStep(u8),
    #[error("bad cost-model snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}

/// Cost kind of a step in the 19-step table.
pub fn step_kind(step: u8) -> Result<CostKind, CostError> {
    crate::planner::StepId::new(step)
        .map(|s| s.kind())
        .ok_or(CostError::UnmappedStep(step))
}

/// Live parameters in microseconds. For bivariate kinds `b` is the slope in
/// `x` (j) and `b2` the slope in `y` (k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub a: f64,
    pub b: f64,
    pub b2: f64,
    pub sample_count: u64,
    pub fitted: bool,
}

impl CostFunction {
    fn from_prior(p: LinearCost) -> Self {
        CostFunction {
            a: p.a_us,
            b: p.b_us,
            b2: p.b2_us,
            sample_count: 0,
            fitted: false,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.a + self.b * x + self.b2 * y).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelConfig {
    /// Per-sample recency decay; a sample of age `n` has weight `lambda^n`.
    pub lambda: f64,
    /// Sample buffer capacity per key.
    pub window: usize,
    /// Refit after this many new samples.
    pub refit_every: usize,
    /// Prior for every key, indexed like [`CostKey::ALL`].
    pub priors: Vec<(CostKey, LinearCost)>,
}

impl CostModelConfig {
    /// Priors with transmit costs taken from the topology's link profile
    /// and small constants elsewhere.
    pub fn for_topology(topology: &Topology) -> Self {
        let priors = CostKey::ALL
            .iter()
            .map(|&k| {
                let p = match k.kind {
                    CostKind::Ft => {
                        let bw = topology.bandwidth(k.scope);
                        let per_kib = if bw.is_infinite() {
                            0.0
                        } else {
                            1024.0 / bw * 1e6
                        };
                        LinearCost::new(topology.latency(k.scope).as_secs_f64() * 1e6, per_kib)
                    }
                    CostKind::FC | CostKind::FR => LinearCost::bivariate(10.0, 1.0, 1.0),
                    _ => LinearCost::new(10.0, 1.0),
                };
                (k, p)
            })
            .collect();
        CostModelConfig {
            lambda: 0.95,
            window: 256,
            refit_every: 64,
            priors,
        }
    }

    pub fn prior(&self, key: CostKey) -> LinearCost {
        self.priors
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, p)| *p)
            .unwrap_or(LinearCost::new(10.0, 1.0))
    }
}

impl Default for CostModelConfig {
    fn default() -> Self {
        Self::for_topology(&Topology::two_dc())
    }
}

#[derive(Debug, Clone, Default)]
struct SampleStore {
    buf: VecDeque<WeightedSample>,
    next_index: u64,
    since_refit: usize,
}

/// One node's cost table.
#[derive(Debug, Clone)]
pub struct CostModel {
    config: CostModelConfig,
    functions: [CostFunction; 13],
    stores: [SampleStore; 13],
}

impl CostModel {
    pub fn new(config: CostModelConfig) -> Self {
        let functions = CostKey::ALL.map(|k| CostFunction::from_prior(config.prior(k)));
        CostModel {
            config,
            functions,
            stores: Default::default(),
        }
    }

    pub fn config(&self) -> &CostModelConfig {
        &self.config
    }

    pub fn function(&self, key: CostKey) -> &CostFunction {
        &self.functions[key.slot()]
    }

    pub fn buffered(&self, key: CostKey) -> usize {
        self.stores[key.slot()].buf.len()
    }

    /// Estimated microseconds for `x` units (and `y` for bivariate kinds).
    pub fn estimate_us(&self, key: CostKey, x: f64, y: f64) -> f64 {
        if key.kind == CostKind::Ft && key.scope == LinkScope::Local {
            return 0.0;
        }
        let slot = key.slot();
        if key.kind == CostKind::FeRtw && !self.functions[slot].fitted {
            let own = self.functions[slot].eval(x, y);
            return own.max(self.functions[CostKey::of(CostKind::Fe).slot()].eval(x, y));
        }
        self.functions[slot].eval(x, y)
    }

    pub fn estimate(&self, key: CostKey, x: f64, y: f64) -> Duration {
        Duration::from_nanos((self.estimate_us(key, x, y) * 1000.0).round() as u64)
    }

    /// Records one observation; refits when due.
    pub fn record_sample(&mut self, key: CostKey, x: f64, y: f64, elapsed: Duration) {
        if key.kind == CostKind::Ft && key.scope == LinkScope::Local {
            return;
        }
        let slot = key.slot();
        let t = elapsed.as_secs_f64() * 1e6;
        let store = &mut self.stores[slot];
        let idx = store.next_index;
        store.next_index += 1;
        store.buf.push_back(WeightedSample {
            x,
            y,
            t,
            index: idx,
        });
        while store.buf.len() > self.config.window.max(1) {
            store.buf.pop_front();
        }
        store.since_refit += 1;
        self.functions[slot].sample_count += 1;
        if store.since_refit >= self.config.refit_every.max(1)
            || store.buf.len() >= self.config.window.max(1)
        {
            self.refit(key);
        }
    }

    /// Refits one key from its buffer. Degenerate data keeps the previous
    /// parameters (and the samples); a successful fit clears the buffer.
    pub fn refit(&mut self, key: CostKey) -> (f64, f64) {
        let slot = key.slot();
        let store = &mut self.stores[slot];
        store.since_refit = 0;
        let samples: Vec<WeightedSample> = store.buf.iter().copied().collect();
        let fit = if key.kind.is_bivariate() {
            fit_bivariate(&samples, self.config.lambda)
        } else {
            fit_univariate(&samples, self.config.lambda)
        };
        if let Some(f) = fit {
            let func = &mut self.functions[slot];
            func.a = f.a;
            func.b = f.b;
            func.b2 = f.b2;
            func.fitted = true;
            store.buf.clear();
        }
        let f = &self.functions[slot];
        (f.a, f.b)
    }

    /// Sets live parameters directly (tests, replays).
    pub fn set_function(&mut self, key: CostKey, a: f64, b: f64, b2: f64) {
        let f = &mut self.functions[key.slot()];
        f.a = a;
        f.b = b;
        f.b2 = b2;
        f.fitted = true;
    }

    /// Estimated microseconds of a plan's steps (response transfer excluded).
    pub fn path_cost_us(&self, plan: &Plan) -> f64 {
        plan.cost_us(self)
    }

    pub fn path_cost(&self, plan: &Plan) -> Duration {
        Duration::from_nanos((self.path_cost_us(plan) * 1000.0).round() as u64)
    }

    /// Structured text snapshot: one `key a b b2 sample_count fitted` line
    /// per key, microsecond units.
    pub fn export_text(&self) -> String {
        let mut s = String::from("# key a_us b_us b2_us samples fitted\n");
        for k in CostKey::ALL {
            let f = self.function(k);
            let _ = writeln!(
                s,
                "{} {:.6} {:.6} {:.6} {} {}",
                k.label(),
                f.a,
                f.b,
                f.b2,
                f.sample_count,
                f.fitted
            );
        }
        s
    }

    pub fn import_text(&mut self, text: &str) -> Result<(), CostError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| CostError::Snapshot {
                line: i + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let key = CostKey::from_label(f[0]).ok_or_else(|| bad("unknown key"))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            let func = &mut self.functions[key.slot()];
            func.a = num(f[1])?;
            func.b = num(f[2])?;
            func.b2 = num(f[3])?;
            func.sample_count = f[4].parse().map_err(|_| bad("bad count"))?;
            func.fitted = f[5].parse().map_err(|_| bad("bad flag"))?;
        }
        Ok(())
    }
}
