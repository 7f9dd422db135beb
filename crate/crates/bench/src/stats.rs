// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("no samples")]
    EmptySamples,
    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(String),
}

/// Nearest-rank percentile: the sorted sample at rank `ceil(p/100 * n)`.
pub fn percentile<T: Copy + PartialOrd>(samples: &[T], p: f64) -> Result<T, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(StatsError::BadPercentile(p.to_string()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("comparable samples"));
    Ok(s[rank(s.len(), p)])
}

/// Percentile of already sorted samples.
pub fn percentile_sorted<T: Copy>(sorted: &[T], p: f64) -> Result<T, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(StatsError::BadPercentile(p.to_string()));
    }
    Ok(sorted[rank(sorted.len(), p)])
}

fn rank(n: usize, p: f64) -> usize {
    let r = (p / 100.0 * n as f64).ceil() as usize;
    r.clamp(1, n) - 1
}

pub fn mean(samples: &[u64]) -> Option<f64> {
    (!samples.is_empty())
        .then(|| samples.iter().map(|&v| v as f64).sum::<f64>() / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 99.0).unwrap(), 99);
        assert_eq!(percentile(&v, 100.0).unwrap(), 100);
        assert_eq!(percentile(&v, 0.5).unwrap(), 1);
    }

    #[test]
    fn single_sample() {
        for p in [1.0, 50.0, 100.0] {
            assert_eq!(percentile(&[7u64], p).unwrap(), 7);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(percentile::<u64>(&[], 50.0), Err(StatsError::EmptySamples));
        assert!(percentile(&[1u64], 0.0).is_err());
        assert!(percentile(&[1u64], 100.1).is_err());
    }
}
