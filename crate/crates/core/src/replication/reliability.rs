// SPDX-License-Identifier: Apache-2.0

//! Replica count needed for a target system failure probability.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
}

/// How the bracketed `r/2` exponent is rounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HalfRounding {
    #[default]
    Ceil,
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityQuery {
    /// Failure probability of one node.
    pub p_i: f64,
    /// Acceptable failure probability of the system.
    pub p_f: f64,
    pub rounding: HalfRounding,
}

/// `(p_i^[r/2] - p_i^(r+1)) / (1 - p_i)`.
pub fn system_failure(p_i: f64, r: u32, rounding: HalfRounding) -> f64 {
    let half = match rounding {
        HalfRounding::Ceil => r.div_ceil(2),
        HalfRounding::Floor => r / 2,
    };
    (p_i.powi(half as i32) - p_i.powi(r as i32 + 1)) / (1.0 - p_i)
}

/// Smallest `r >= 1` whose system failure probability is at most `p_f`.
/// Gives up at `r = 1024`.
pub fn reliable_replica_count(q: ReliabilityQuery) -> Result<u32, ReliabilityError> {
    for p in [q.p_i, q.p_f] {
        if !(p > 0.0 && p < 1.0) {
            return Err(ReliabilityError::InvalidProbability(p));
        }
    }
    let mut r = 1;
    while r < 1024 && system_failure(q.p_i, r, q.rounding) > q.p_f {
        r += 1;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p_i: f64, p_f: f64) -> ReliabilityQuery {
        ReliabilityQuery {
            p_i,
            p_f,
            rounding: HalfRounding::Ceil,
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(reliable_replica_count(q(0.0, 0.1)).is_err());
        assert!(reliable_replica_count(q(0.1, 1.0)).is_err());
        assert!(reliable_replica_count(q(f64::NAN, 0.1)).is_err());
    }

    #[test]
    fn base_case_is_one() {
        let f1 = system_failure(0.1, 1, HalfRounding::Ceil);
        assert_eq!(reliable_replica_count(q(0.1, f1)).unwrap(), 1);
        assert_eq!(reliable_replica_count(q(1e-9, 0.5)).unwrap(), 1);
    }

    #[test]
    fn more_reliability_needs_more_replicas() {
        let a = reliable_replica_count(q(0.1, 1e-2)).unwrap();
        let b = reliable_replica_count(q(0.1, 1e-6)).unwrap();
        assert!(b > a);
    }
}
