//! Static CVaR Q-value iteration with a sup-norm stopping certificate.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bellman::{DiscretizedBellman, QTable};
use crate::budget::{BudgetGrid, GridSummary, RoundingMode};
use crate::mdp::TabularMdp;
use crate::{Error, Result};

/// Default stopping tolerance for the sup-norm change between sweeps.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Stop once the sup-norm change of a sweep drops below this.
    pub tolerance: f64,
    /// Sweep budget; `None` uses the analytic worst case plus slack.
    pub max_iters: Option<usize>,
    /// Invoke the progress callback every this many sweeps (0 disables).
    pub progress_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iters: None,
            progress_every: 0,
        }
    }
}

/// Worst-case sweep count for reaching `tolerance` from the zero table, plus
/// slack: iterates start within `2 r_gamma` of the fixed point and contract
/// by `gamma` per sweep.
pub fn default_max_iters(gamma: f64, r_gamma: f64, tolerance: f64) -> usize {
    let ratio = tolerance * (1.0 - gamma) / (2.0 * r_gamma);
    if ratio >= 1.0 || gamma == 0.0 {
        return 100;
    }
    (ratio.ln() / gamma.ln()).ceil() as usize + 100
}

#[derive(Debug)]
pub struct SolveReport {
    pub q_star: QTable,
    pub iterations: usize,
    pub final_delta: f64,
    /// Sup-norm distance bound to the true fixed point:
    /// `gamma * final_delta / (1 - gamma)`.
    pub certified_error: f64,
    pub mode: RoundingMode,
    /// Seconds spent sweeping.
    pub wall_time: f64,
}

/// Report header written to disk alongside the solved table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub final_delta: f64,
    pub certified_error: f64,
    pub mode: RoundingMode,
    pub wall_time_s: f64,
    pub grid: GridSummary,
    pub mdp_hash: u64,
}

impl SolveReport {
    pub fn summary(&self, mdp_hash: u64) -> SolveSummary {
        SolveSummary {
            iterations: self.iterations,
            final_delta: self.final_delta,
            certified_error: self.certified_error,
            mode: self.mode,
            wall_time_s: self.wall_time,
            grid: self.q_star.grid().summary(),
            mdp_hash,
        }
    }
}

/// Run Q-value iteration from the zero table until the sup-norm change of a
/// sweep falls below the tolerance.
///
/// The returned table is within `gamma * tolerance / (1 - gamma)` of the
/// discretized fixed point in sup-norm. Exceeding the sweep budget is a hard
/// error carrying the last observed change.
pub fn solve(
    mdp: &TabularMdp,
    grid: &BudgetGrid,
    mode: RoundingMode,
    options: &SolveOptions,
) -> Result<SolveReport> {
    solve_with_progress(mdp, grid, mode, options, |_, _| {})
}

pub fn solve_with_progress(
    mdp: &TabularMdp,
    grid: &BudgetGrid,
    mode: RoundingMode,
    options: &SolveOptions,
    mut progress: impl FnMut(usize, f64),
) -> Result<SolveReport> {
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".to_string()));
    }
    mdp.check()?;
    if !mdp.has_nonpositive_rewards() {
        log::warn!(
            "MDP has positive rewards; lower/upper ordering and monotonicity \
             guarantees do not apply"
        );
    }
    let max_iters = options
        .max_iters
        .unwrap_or_else(|| default_max_iters(mdp.gamma, mdp.r_gamma(), options.tolerance));

    let start = Instant::now();
    let op = DiscretizedBellman::cvar(mdp, grid, mode);
    let mut q = op.zero_table();
    let mut last_delta = f64::INFINITY;
    for iteration in 1..=max_iters {
        let (next, delta) = op.sweep(&q);
        q = next;
        last_delta = delta;
        if options.progress_every > 0 && iteration % options.progress_every == 0 {
            progress(iteration, delta);
        }
        if delta < options.tolerance {
            return Ok(SolveReport {
                q_star: q,
                iterations: iteration,
                final_delta: delta,
                certified_error: mdp.gamma * delta / (1.0 - mdp.gamma),
                mode,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        last_delta,
        tolerance: options.tolerance,
    })
}

/// Solve the lower and upper bounding operators in lockstep: both run the
/// same number of sweeps, stopping once both deltas are below the tolerance.
///
/// From the zero table the lower iterate never exceeds the upper iterate at
/// any sweep count (given non-positive rewards), so the returned pair is
/// elementwise ordered, which independent stopping does not guarantee at the
/// tolerance's last ulp.
pub fn solve_pair(
    mdp: &TabularMdp,
    grid: &BudgetGrid,
    options: &SolveOptions,
) -> Result<(SolveReport, SolveReport)> {
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".to_string()));
    }
    mdp.check()?;
    if !mdp.has_nonpositive_rewards() {
        log::warn!(
            "MDP has positive rewards; lower/upper ordering and monotonicity \
             guarantees do not apply"
        );
    }
    let max_iters = options
        .max_iters
        .unwrap_or_else(|| default_max_iters(mdp.gamma, mdp.r_gamma(), options.tolerance));

    let start = Instant::now();
    let op_l = DiscretizedBellman::cvar(mdp, grid, RoundingMode::Lower);
    let op_u = DiscretizedBellman::cvar(mdp, grid, RoundingMode::Upper);
    let mut q_l = op_l.zero_table();
    let mut q_u = op_u.zero_table();
    let (mut delta_l, mut delta_u) = (f64::INFINITY, f64::INFINITY);
    for iteration in 1..=max_iters {
        let (next_l, dl) = op_l.sweep(&q_l);
        let (next_u, du) = op_u.sweep(&q_u);
        q_l = next_l;
        q_u = next_u;
        delta_l = dl;
        delta_u = du;
        if delta_l < options.tolerance && delta_u < options.tolerance {
            let wall_time = start.elapsed().as_secs_f64();
            let report = |q_star, final_delta, mode| SolveReport {
                q_star,
                iterations: iteration,
                final_delta,
                certified_error: mdp.gamma * final_delta / (1.0 - mdp.gamma),
                mode,
                wall_time,
            };
            return Ok((
                report(q_l, delta_l, RoundingMode::Lower),
                report(q_u, delta_u, RoundingMode::Upper),
            ));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        last_delta: delta_l.max(delta_u),
        tolerance: options.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crater::{build_crater_walk, CraterWalkConfig};

    fn single_absorbing() -> TabularMdp {
        TabularMdp {
            n_states: 1,
            n_actions: 1,
            gamma: 0.9,
            r_max: 1.0,
            initial_state: 0,
            absorbing: vec![0],
            reward: vec![vec![0.0]],
            transition: vec![vec![vec![1.0]]],
        }
    }

    #[test]
    fn absorbing_state_solves_to_zero_immediately() {
        let mdp = single_absorbing();
        let grid = BudgetGrid::symmetric(mdp.r_gamma(), 5).unwrap();
        for mode in [RoundingMode::Lower, RoundingMode::Upper] {
            let report = solve(&mdp, &grid, mode, &SolveOptions::default()).unwrap();
            assert!(report.iterations <= 2);
            assert!(report.q_star.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn deterministic_self_loop_has_known_fixed_point() {
        // Reward -1 forever at gamma 0.5: the return is exactly -2, so the
        // value at budget 0 is min(0, -2) = -2.
        let mdp = TabularMdp {
            n_states: 1,
            n_actions: 1,
            gamma: 0.5,
            r_max: 1.0,
            initial_state: 0,
            absorbing: vec![],
            reward: vec![vec![-1.0]],
            transition: vec![vec![vec![1.0]]],
        };
        let grid = BudgetGrid::symmetric(mdp.r_gamma(), 2).unwrap();
        let options = SolveOptions {
            tolerance: 1e-10,
            ..SolveOptions::default()
        };
        for mode in [RoundingMode::Lower, RoundingMode::Upper] {
            let report = solve(&mdp, &grid, mode, &options).unwrap();
            let zi = grid.round(RoundingMode::Lower, 0.0);
            assert!((report.q_star.get(0, zi, 0) - (-2.0)).abs() <= report.certified_error + 1e-12);
        }
    }

    #[test]
    fn crater_walk_converges_with_certificate() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 1001).unwrap();
        let options = SolveOptions::default();
        let report = solve(&mdp, &grid, RoundingMode::Lower, &options).unwrap();
        assert!(report.final_delta < options.tolerance);
        assert!(
            report.iterations <= default_max_iters(mdp.gamma, mdp.r_gamma(), options.tolerance)
        );
        assert!(report.q_star.max_abs() <= mdp.r_gamma() + 1e-9);

        // Post-hoc certificate: one extra sweep moves the table by < tolerance.
        let op = DiscretizedBellman::cvar(&mdp, &grid, RoundingMode::Lower);
        let (_, extra_delta) = op.sweep(&report.q_star);
        assert!(extra_delta < options.tolerance);
    }

    #[test]
    fn lower_and_upper_tables_sandwich() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 101).unwrap();
        let options = SolveOptions::default();
        let (lower, upper) = solve_pair(&mdp, &grid, &options).unwrap();
        assert_eq!(lower.mode, RoundingMode::Lower);
        assert_eq!(upper.mode, RoundingMode::Upper);
        assert!(lower.final_delta < options.tolerance);
        assert!(upper.final_delta < options.tolerance);
        for (l, u) in lower.q_star.values().iter().zip(upper.q_star.values()) {
            assert!(*l <= u + 1e-12, "lower {l} above upper {u}");
        }
        let gamma = mdp.gamma;
        let bound = 2.0 * gamma * grid.delta() / (1.0 - gamma)
            + 2.0 * gamma * options.tolerance / (1.0 - gamma);
        assert!(lower.q_star.sup_dist(&upper.q_star) <= bound);
    }

    #[test]
    fn sweep_budget_exhaustion_is_an_error() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 31).unwrap();
        let options = SolveOptions {
            max_iters: Some(3),
            ..SolveOptions::default()
        };
        match solve(&mdp, &grid, RoundingMode::Lower, &options) {
            Err(Error::NonConvergence { iterations, last_delta, .. }) => {
                assert_eq!(iterations, 3);
                assert!(last_delta > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
