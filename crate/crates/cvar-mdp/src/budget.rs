//! The augmented budget dimension: a uniform grid over the return range,
//! the projection and rounding maps that keep budget updates on the grid,
//! and the transformed per-step reward.
//!
//! The budget `z` evolves as `z' = p(e((r + z) / gamma))` where `e` rounds
//! down or up to the grid and `p` clamps to the grid range. Rounding down
//! yields a certified under-approximation of the true value function,
//! rounding up an over-approximation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Selects the rounding map: `Lower` floors to the grid, `Upper` ceils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMode {
    Lower,
    Upper,
}

impl std::fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RoundingMode::Lower => write!(f, "lower"),
            RoundingMode::Upper => write!(f, "upper"),
        }
    }
}

/// Relative tolerance for snapping near-exact grid multiples during rounding,
/// so that values equal to a grid point up to representation error round to
/// themselves instead of flapping between floor and ceil.
const ROUND_SNAP_TOL: f64 = 1e-9;

/// A uniform budget grid.
///
/// The theoretical grid spans `[-r_gamma, r_gamma]` with spacing
/// `delta = r_gamma / k` and `2k + 1` points, zero sitting exactly on the
/// grid. A custom range is supported for experiment replication; projection
/// then clamps to that range instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetGrid {
    delta: f64,
    n_points: usize,
    /// Grid value at `origin_index`; all points are `origin + (i - origin_index) * delta`.
    origin: f64,
    origin_index: usize,
    /// Return bound the grid was built against (reporting only).
    r_gamma: f64,
}

/// Grid description embedded in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSummary {
    pub delta: f64,
    pub k: usize,
    pub r_gamma: f64,
    pub n_points: usize,
}

impl BudgetGrid {
    /// Symmetric grid `{-k*delta, ..., 0, ..., k*delta}` with `delta = r_gamma / k`.
    pub fn symmetric(r_gamma: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("grid needs k >= 1".to_string()));
        }
        if !(r_gamma > 0.0) {
            return Err(Error::InvalidInput(format!("r_gamma {r_gamma} must be positive")));
        }
        Ok(BudgetGrid {
            delta: r_gamma / k as f64,
            n_points: 2 * k + 1,
            origin: 0.0,
            origin_index: k,
            r_gamma,
        })
    }

    /// Symmetric grid from a point count; `bins` is normalized to the nearest
    /// odd `2k + 1` (so a nominal 5000 becomes 5001 points, k = 2500).
    pub fn from_bins(r_gamma: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidInput("grid needs at least 2 bins".to_string()));
        }
        let k = (((bins - 1) as f64) / 2.0).round().max(1.0) as usize;
        Self::symmetric(r_gamma, k)
    }

    /// Uniform grid over an explicit `[z_min, z_max]` range. Projection
    /// clamps to this range rather than the theoretical one.
    pub fn custom(z_min: f64, z_max: f64, n_points: usize, r_gamma: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidInput("grid needs at least 2 points".to_string()));
        }
        if !(z_min < z_max) {
            return Err(Error::InvalidInput(format!("empty grid range [{z_min}, {z_max}]")));
        }
        Ok(BudgetGrid {
            delta: (z_max - z_min) / (n_points - 1) as f64,
            n_points,
            origin: z_min,
            origin_index: 0,
            r_gamma,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn r_gamma(&self) -> f64 {
        self.r_gamma
    }

    pub fn min_value(&self) -> f64 {
        self.value(0)
    }

    pub fn max_value(&self) -> f64 {
        self.value(self.n_points - 1)
    }

    /// Value of the `i`-th grid point.
    pub fn value(&self, i: usize) -> f64 {
        self.origin + (i as f64 - self.origin_index as f64) * self.delta
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.value(i))
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            delta: self.delta,
            k: (self.n_points - 1) / 2,
            r_gamma: self.r_gamma,
            n_points: self.n_points,
        }
    }

    /// Projection onto the grid range: `clamp(x, min_value, max_value)`.
    /// Idempotent and 1-Lipschitz.
    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.min_value(), self.max_value())
    }

    /// Signed grid coordinate of `x` after rounding, before any clamping.
    fn round_coord(&self, mode: RoundingMode, x: f64) -> i64 {
        let t = (x - self.origin) / self.delta + self.origin_index as f64;
        let nearest = t.round();
        let snapped = (self.origin + (nearest - self.origin_index as f64) * self.delta - x).abs()
            <= ROUND_SNAP_TOL * x.abs().max(1.0);
        let coord = if snapped {
            nearest
        } else {
            match mode {
                RoundingMode::Lower => t.floor(),
                RoundingMode::Upper => t.ceil(),
            }
        };
        coord as i64
    }

    /// Round `x` (expected within the grid range) to a grid index: `Lower`
    /// picks the largest grid point `<= x`, `Upper` the smallest `>= x`.
    pub fn round(&self, mode: RoundingMode, x: f64) -> usize {
        self.round_coord(mode, x).clamp(0, self.n_points as i64 - 1) as usize
    }

    /// Budget transition `z' = p(e((r + z_k) / gamma))` as a grid index.
    pub fn next_budget(&self, mode: RoundingMode, z_index: usize, r: f64, gamma: f64) -> usize {
        self.next_budget_raw(mode, self.value(z_index), r, gamma)
    }

    /// Budget transition from an arbitrary real budget.
    pub fn next_budget_raw(&self, mode: RoundingMode, z: f64, r: f64, gamma: f64) -> usize {
        let raw = (r + z) / gamma;
        // Rounding first, projection second: the rounded multiple may fall
        // outside the range and is then clamped to the boundary point.
        self.round_coord(mode, raw).clamp(0, self.n_points as i64 - 1) as usize
    }
}

/// Dense per-step reward of the transformed augmented MDP:
/// `min(0, r + z) - min(0, z)`. Bounded by `|r|`; zero whenever both `z >= 0`
/// and `r + z >= 0`.
pub fn transformed_reward(z: f64, r: f64) -> f64 {
    (r + z).min(0.0) - z.min(0.0)
}

/// Per-step reward of the baseline augmented MDP: identically zero. All
/// return information there is deferred to a terminal functional, which is
/// what the transformed reward redistributes across time.
pub fn bauerle_reward(_z: f64, _r: f64) -> f64 {
    0.0
}
