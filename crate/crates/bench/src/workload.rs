// SPDX-License-Identifier: Apache-2.0

//! Deterministic operation streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use latbound_core::model::LatencyBound;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KeyDist {
    Uniform,
    /// Skew exponent in (0, 1).
    Zipfian(f64),
}

/// `writes` same-key writes, then one read per entry of `read_bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShape {
    pub writes: usize,
    pub write_bound: LatencyBound,
    pub read_bounds: Vec<LatencyBound>,
    pub ordered: bool,
    /// Every group gets a key never used before.
    pub fresh_keys: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Operations, or groups when `group` is set.
    pub op_count: usize,
    /// Writes to reads, e.g. `(9, 1)`.
    pub ratio: (u32, u32),
    pub keys: KeyDist,
    pub key_space: usize,
    pub value_size: usize,
    pub write_bound: LatencyBound,
    pub read_bound: LatencyBound,
    pub ordered: bool,
    pub group: Option<GroupShape>,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            op_count: 1000,
            ratio: (1, 1),
            keys: KeyDist::Uniform,
            key_space: 10_000,
            value_size: 1024,
            write_bound: LatencyBound::Infinite,
            read_bound: LatencyBound::Infinite,
            ordered: true,
            group: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Write,
    Read,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenOp {
    pub kind: OpKind,
    pub key: String,
    pub bound: LatencyBound,
    pub ordered: bool,
    /// Empty for reads.
    pub value: Vec<u8>,
    /// Group index for grouped workloads.
    pub group: Option<usize>,
}

pub fn key_name(rank: usize) -> String {
    format!("user{rank:08}")
}

/// A value unique to `tag`, padded to `size` bytes.
pub fn value_for(tag: u64, size: usize) -> Vec<u8> {
    let mut v = format!("{tag:016x}").into_bytes();
    let fill = b'a' + (tag % 26) as u8;
    v.resize(size.max(16), fill);
    v
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidSpec(m.into()));
        if self.group.is_none() && (self.ratio.0 == 0 && self.ratio.1 == 0) {
            return bad("ratio has no positive component");
        }
        if self.key_space == 0 {
            return bad("empty key space");
        }
        if let KeyDist::Zipfian(t) = self.keys {
            if !(t > 0.0 && t < 1.0) {
                return bad("zipfian exponent must lie in (0, 1)");
            }
        }
        if let Some(g) = &self.group {
            if g.writes == 0 && g.read_bounds.is_empty() {
                return bad("empty group");
            }
        }
        Ok(())
    }
}

/// Key ranks drawn from the spec's distribution, 0-based.
pub struct KeySampler {
    rng: ChaCha8Rng,
    zipf: Option<Zipf<f64>>,
    n: usize,
}

impl KeySampler {
    pub fn new(dist: KeyDist, n: usize, seed: u64) -> Result<Self, WorkloadError> {
        let zipf = match dist {
            KeyDist::Uniform => None,
            KeyDist::Zipfian(t) => Some(
                Zipf::new(n as f64, t).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?,
            ),
        };
        Ok(KeySampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            zipf,
            n,
        })
    }

    pub fn next_rank(&mut self) -> usize {
        match &self.zipf {
            Some(z) => (z.sample(&mut self.rng) as usize).clamp(1, self.n) - 1,
            None => self.rng.random_range(0..self.n),
        }
    }
}

/// Whether op `i` is a write under a deterministic `w:r` interleave.
fn is_write(i: usize, (w, r): (u32, u32)) -> bool {
    let total = (w + r) as usize;
    ((i + 1) * w as usize) / total > (i * w as usize) / total
}

pub fn gen_workload(spec: &WorkloadSpec) -> Result<Vec<GenOp>, WorkloadError> {
    spec.validate()?;
    let mut keys = KeySampler::new(spec.keys, spec.key_space, spec.seed)?;
    let mut out = Vec::new();
    let mut tag = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut next_value = |size| {
        tag = tag.wrapping_add(1);
        value_for(tag, size)
    };
    match &spec.group {
        None => {
            for i in 0..spec.op_count {
                let key = key_name(keys.next_rank());
                if is_write(i, spec.ratio) {
                    out.push(GenOp {
                        kind: OpKind::Write,
                        key,
                        bound: spec.write_bound,
                        ordered: spec.ordered,
                        value: next_value(spec.value_size),
                        group: None,
                    });
                } else {
                    out.push(GenOp {
                        kind: OpKind::Read,
                        key,
                        bound: spec.read_bound,
                        ordered: false,
                        value: Vec::new(),
                        group: None,
                    });
                }
            }
        }
        Some(g) => {
            for gi in 0..spec.op_count {
                let key = if g.fresh_keys {
                    format!("group{:016x}-{gi}", spec.seed)
                } else {
                    key_name(keys.next_rank())
                };
                for _ in 0..g.writes {
                    out.push(GenOp {
                        kind: OpKind::Write,
                        key: key.clone(),
                        bound: g.write_bound,
                        ordered: g.ordered,
                        value: next_value(spec.value_size),
                        group: Some(gi),
                    });
                }
                for &b in &g.read_bounds {
                    out.push(GenOp {
                        kind: OpKind::Read,
                        key: key.clone(),
                        bound: b,
                        ordered: false,
                        value: Vec::new(),
                        group: Some(gi),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Splits ops into `n` streams round-robin, keeping groups whole.
pub fn split_streams(ops: Vec<GenOp>, n: usize) -> Vec<Vec<GenOp>> {
    let n = n.max(1);
    let mut out: Vec<Vec<GenOp>> = vec![Vec::new(); n];
    let mut slot = 0;
    let mut last_group = None;
    for (i, op) in ops.into_iter().enumerate() {
        match op.group {
            Some(g) => {
                if last_group.is_some_and(|l| l != g) {
                    slot = (slot + 1) % n;
                }
                last_group = Some(g);
                out[slot].push(op);
            }
            None => out[i % n].push(op),
        }
    }
    out.retain(|s| !s.is_empty());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_gives_exact_counts() {
        let spec = WorkloadSpec {
            op_count: 10_000,
            ratio: (9, 1),
            ..Default::default()
        };
        let ops = gen_workload(&spec).unwrap();
        let w = ops.iter().filter(|o| o.kind == OpKind::Write).count();
        assert_eq!(w, 9000);
    }

    #[test]
    fn groups_share_keys() {
        let spec = WorkloadSpec {
            op_count: 100,
            group: Some(GroupShape {
                writes: 99,
                write_bound: LatencyBound::millis(0),
                read_bounds: vec![LatencyBound::Infinite],
                ordered: true,
                fresh_keys: false,
            }),
            ..Default::default()
        };
        let ops = gen_workload(&spec).unwrap();
        assert_eq!(ops.len(), 100 * 100);
        for chunk in ops.chunks(100) {
            assert!(chunk.iter().all(|o| o.key == chunk[0].key));
            assert_eq!(chunk[99].kind, OpKind::Read);
        }
    }

    #[test]
    fn split_keeps_groups_whole() {
        let spec = WorkloadSpec {
            op_count: 10,
            group: Some(GroupShape {
                writes: 3,
                write_bound: LatencyBound::millis(0),
                read_bounds: vec![LatencyBound::Infinite],
                ordered: true,
                fresh_keys: true,
            }),
            ..Default::default()
        };
        let streams = split_streams(gen_workload(&spec).unwrap(), 4);
        assert_eq!(streams.len(), 4);
        for s in &streams {
            assert_eq!(s.len() % 4, 0);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = WorkloadSpec {
            keys: KeyDist::Zipfian(0.99),
            ..Default::default()
        };
        assert_eq!(gen_workload(&spec).unwrap(), gen_workload(&spec).unwrap());
    }

    #[test]
    fn rejects_bad_theta() {
        let spec = WorkloadSpec {
            keys: KeyDist::Zipfian(1.5),
            ..Default::default()
        };
        assert!(gen_workload(&spec).is_err());
    }
}
