//! Uniform level grids used to discretize continuous quantities.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// An equally spaced grid of `count` levels starting at `lo`.
///
/// Level `k` carries the physical value `lo + k * step`. Continuous values
/// quantize to the nearest level, clamped to the grid, so the
/// level -> value -> level round trip is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    pub lo: f64,
    pub step: f64,
    pub count: usize,
}

impl LevelGrid {
    pub fn new(lo: f64, step: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(CoreError::Config("grid needs at least one level".into()));
        }
        if count > 1 && step <= 0.0 {
            return Err(CoreError::Config("grid step must be positive".into()));
        }
        Ok(Self { lo, step, count })
    }

    /// Grid spanning [lo, hi] inclusive with the given step.
    pub fn spanning(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if hi < lo || step <= 0.0 {
            return Err(CoreError::Config(format!(
                "bad grid range [{lo}, {hi}] step {step}"
            )));
        }
        let count = ((hi - lo) / step).round() as usize + 1;
        Self::new(lo, step, count)
    }

    pub fn hi(&self) -> f64 {
        self.lo + (self.count - 1) as f64 * self.step
    }

    pub fn value(&self, level: usize) -> f64 {
        debug_assert!(level < self.count);
        self.lo + level as f64 * self.step
    }

    /// Nearest level for a continuous value, clamped into the grid.
    pub fn quantize(&self, x: f64) -> usize {
        if self.count == 1 {
            return 0;
        }
        let k = ((x - self.lo) / self.step).round();
        (k.max(0.0) as usize).min(self.count - 1)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|k| self.value(k))
    }
}
