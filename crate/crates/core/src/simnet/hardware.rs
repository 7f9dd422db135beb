// SPDX-License-Identifier: Apache-2.0

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costmodel::CostKind;

/// `a + b*x + b2*y` microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCost {
    pub a_us: f64,
    pub b_us: f64,
    #[serde(default)]
    pub b2_us: f64,
}

impl LinearCost {
    pub const fn new(a_us: f64, b_us: f64) -> Self {
        LinearCost {
            a_us,
            b_us,
            b2_us: 0.0,
        }
    }

    pub const fn bivariate(a_us: f64, bj_us: f64, bk_us: f64) -> Self {
        LinearCost {
            a_us,
            b_us: bj_us,
            b2_us: bk_us,
        }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        self.a_us + self.b_us * x + self.b2_us * y
    }
}

/// Actual CPU and disk cost of each local step on a simulated node, with
/// multiplicative uniform noise. Transmission is not listed: the network
/// model produces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub flush: LinearCost,
    pub append: LinearCost,
    pub file_read: LinearCost,
    pub align: LinearCost,
    pub insert: LinearCost,
    pub execute: LinearCost,
    pub execute_rtw: LinearCost,
    pub compact: LinearCost,
    pub acquire: LinearCost,
    pub noise: f64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        HardwareProfile {
            flush: LinearCost::new(150.0, 4.0),
            append: LinearCost::new(3.0, 0.8),
            file_read: LinearCost::new(40.0, 3.0),
            align: LinearCost::new(10.0, 1.5),
            insert: LinearCost::new(3.0, 0.8),
            execute: LinearCost::new(8.0, 5.0),
            execute_rtw: LinearCost::new(12.0, 8.0),
            compact: LinearCost::bivariate(300.0, 4.0, 2.0),
            acquire: LinearCost::bivariate(6.0, 1.0, 25.0),
            noise: 0.05,
        }
    }
}

impl HardwareProfile {
    pub fn step(&self, kind: CostKind) -> Option<&LinearCost> {
        Some(match kind {
            CostKind::Fd => &self.flush,
            CostKind::Fa => &self.append,
            CostKind::Fr => &self.file_read,
            CostKind::Fc => &self.align,
            CostKind::Fi => &self.insert,
            CostKind::Fe => &self.execute,
            CostKind::FeRtw => &self.execute_rtw,
            CostKind::FC => &self.compact,
            CostKind::FR => &self.acquire,
            CostKind::Ft => return None,
        })
    }

    pub fn mean_us(&self, kind: CostKind, x: f64, y: f64) -> f64 {
        self.step(kind).map_or(0.0, |c| c.at(x, y))
    }

    /// One noisy draw of a step's duration.
    pub fn draw(&self, kind: CostKind, x: f64, y: f64, rng: &mut impl Rng) -> Duration {
        let mean = self.mean_us(kind, x, y);
        let f = if self.noise > 0.0 {
            1.0 + rng.random_range(-self.noise..=self.noise)
        } else {
            1.0
        };
        Duration::from_nanos((mean * f * 1000.0).max(0.0).round() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_stay_within_noise_band() {
        let hw = HardwareProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let d = hw.draw(CostKind::Fe, 10.0, 0.0, &mut rng).as_secs_f64() * 1e6;
            assert!((d - 58.0).abs() <= 58.0 * 0.05 + 1e-6);
        }
        assert_eq!(hw.draw(CostKind::Ft, 3.0, 0.0, &mut rng), Duration::ZERO);
    }
}
