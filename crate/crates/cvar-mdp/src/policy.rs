//! Outer optimization over initial budgets, greedy policies on the augmented
//! grid, and budget-tracked policy execution in the nominal MDP.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::QTable;
use crate::budget::{transformed_reward, BudgetGrid, RoundingMode};
use crate::mdp::TabularMdp;
use crate::{Error, Result};

/// Risk confidence level, strictly positive: the `1 / alpha` objective
/// diverges at zero. Near-robust behavior is reached with small alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub alpha: f64,
}

impl RiskProfile {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1]")));
        }
        Ok(RiskProfile { alpha })
    }
}

/// Deterministic action map over `(state, budget index)`.
#[derive(Debug, Clone)]
pub struct PolicyMap {
    n_states: usize,
    n_points: usize,
    actions: Vec<usize>,
}

impl PolicyMap {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn action(&self, s: usize, zi: usize) -> usize {
        self.actions[s * self.n_points + zi]
    }
}

/// Greedy action map of a Q-table, ties broken toward the lowest action index.
pub fn greedy_policy(q: &QTable) -> PolicyMap {
    let (n_states, n_points) = (q.n_states(), q.n_points());
    let mut actions = Vec::with_capacity(n_states * n_points);
    for s in 0..n_states {
        for zi in 0..n_points {
            actions.push(q.argmax_action(s, zi));
        }
    }
    PolicyMap {
        n_states,
        n_points,
        actions,
    }
}

/// Result of the scalar maximization over initial budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterSolution {
    /// Index of the maximizing grid budget.
    pub z_index: usize,
    /// Value of the maximizing grid budget.
    pub z_star: f64,
    /// The attained objective, an estimate of the optimal CVaR at `alpha`.
    pub psi_hat: f64,
    pub mode: RoundingMode,
    pub alpha: f64,
}

/// Scan the budget grid for the initial budget maximizing
/// `-z + (1 / alpha) * (-max(0, -z) + max_a q(s0, z, a))`.
///
/// Exact ties go to the smallest `|z|`, then the smaller index.
pub fn outer_optimize(
    q: &QTable,
    mode: RoundingMode,
    alpha: f64,
    initial_state: usize,
) -> Result<OuterSolution> {
    let alpha = RiskProfile::new(alpha)?.alpha;
    if initial_state >= q.n_states() {
        return Err(Error::InvalidInput(format!("initial state {initial_state} out of range")));
    }
    let grid = q.grid();
    let mut best: Option<(f64, usize)> = None;
    for zi in 0..grid.n_points() {
        let z = grid.value(zi);
        let objective = -z + (-(-z).max(0.0) + q.max_over_actions(initial_state, zi)) / alpha;
        let better = match best {
            None => true,
            Some((b, bi)) => {
                objective > b
                    || (objective == b
                        && (z.abs() < grid.value(bi).abs()
                            || (z.abs() == grid.value(bi).abs() && zi < bi)))
            }
        };
        if better {
            best = Some((objective, zi));
        }
    }
    let (psi_hat, z_index) = best.expect("grid is non-empty");
    Ok(OuterSolution {
        z_index,
        z_star: grid.value(z_index),
        psi_hat,
        mode,
        alpha,
    })
}

/// Tracks the running budget of an executing policy through the same
/// rounding and projection used during solving.
#[derive(Debug, Clone)]
pub struct BudgetTracker {
    grid: BudgetGrid,
    mode: RoundingMode,
    gamma: f64,
    index: usize,
}

impl BudgetTracker {
    pub fn new(grid: BudgetGrid, mode: RoundingMode, gamma: f64, start_index: usize) -> Self {
        BudgetTracker {
            grid,
            mode,
            gamma,
            index: start_index,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn value(&self) -> f64 {
        self.grid.value(self.index)
    }

    /// Advance on an observed reward; returns the new budget index.
    pub fn step(&mut self, reward: f64) -> usize {
        self.index = self.grid.next_budget(self.mode, self.index, reward, self.gamma);
        self.index
    }
}

/// A realized trajectory: states, actions, rewards, and the budget index at
/// every visited state (one more budget than actions).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub budget_indices: Vec<usize>,
    /// Realized discounted return.
    pub ret: f64,
    /// Discount the return was accumulated with.
    pub gamma: f64,
}

impl RolloutRecord {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

/// Execute the policy from `(start_state, z_start)` until an absorbing state
/// or the step cap, tracking the budget with `p` and `e` each step.
pub fn execute<RNG: rand::Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &PolicyMap,
    tracker: &mut BudgetTracker,
    start_state: usize,
    step_cap: usize,
    rng: &mut RNG,
) -> RolloutRecord {
    let mut states = vec![start_state];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut budget_indices = vec![tracker.index()];
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut s = start_state;
    while !mdp.is_absorbing(s) && actions.len() < step_cap {
        let a = policy.action(s, tracker.index());
        let (next, r) = mdp.sample_transition(s, a, rng);
        actions.push(a);
        rewards.push(r);
        ret += discount * r;
        discount *= mdp.gamma;
        tracker.step(r);
        budget_indices.push(tracker.index());
        states.push(next);
        s = next;
    }
    RolloutRecord {
        states,
        actions,
        rewards,
        budget_indices,
        ret,
        gamma: mdp.gamma,
    }
}

/// Run `n` independent seeded rollouts in parallel. Rollout `i` uses the RNG
/// seed `base_seed + i`, so results do not depend on scheduling.
pub fn rollout_batch(
    mdp: &TabularMdp,
    policy: &PolicyMap,
    grid: &BudgetGrid,
    mode: RoundingMode,
    start_state: usize,
    z_start_index: usize,
    n: usize,
    step_cap: usize,
    base_seed: u64,
) -> Vec<RolloutRecord> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = StdRng::seed_from_u64(base_seed.wrapping_add(i as u64));
            let mut tracker = BudgetTracker::new(grid.clone(), mode, mdp.gamma, z_start_index);
            execute(mdp, policy, &mut tracker, start_state, step_cap, &mut rng)
        })
        .collect()
}

/// One application of the discretized operator at an arbitrary real budget,
/// using grid lookups only for successors. Extends a converged table off the
/// grid.
pub fn evaluate_offgrid(
    q: &QTable,
    mdp: &TabularMdp,
    grid: &BudgetGrid,
    mode: RoundingMode,
    s: usize,
    z_raw: f64,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for a in 0..mdp.n_actions {
        let r = mdp.reward[s][a];
        let zn = grid.next_budget_raw(mode, z_raw, r, mdp.gamma);
        let mut future = 0.0;
        for (sp, &p) in mdp.transition[s][a].iter().enumerate() {
            if p > 0.0 {
                future += p * q.max_over_actions(sp, zn);
            }
        }
        best = best.max(transformed_reward(z_raw, r) + mdp.gamma * future);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::DiscretizedBellman;
    use crate::crater::{build_crater_walk, CraterWalkConfig};
    use crate::value_iteration::{solve, SolveOptions};
    use rand::Rng;

    #[test]
    fn zero_table_at_alpha_one_peaks_at_zero_budget() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 41).unwrap();
        let op = DiscretizedBellman::cvar(&mdp, &grid, RoundingMode::Lower);
        let solution = outer_optimize(&op.zero_table(), RoundingMode::Lower, 1.0, 0).unwrap();
        assert_eq!(solution.psi_hat, 0.0);
        assert_eq!(solution.z_star, 0.0);
    }

    #[test]
    fn rejects_alpha_out_of_range() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 11).unwrap();
        let op = DiscretizedBellman::cvar(&mdp, &grid, RoundingMode::Lower);
        let q = op.zero_table();
        for alpha in [0.0, -0.5, 1.5] {
            assert!(outer_optimize(&q, RoundingMode::Lower, alpha, 0).is_err());
        }
    }

    #[test]
    fn lower_psi_never_exceeds_upper_psi() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 101).unwrap();
        let options = SolveOptions::default();
        let (lower, upper) = crate::value_iteration::solve_pair(&mdp, &grid, &options).unwrap();
        for alpha in [0.05, 0.1, 0.3, 1.0] {
            let pl = outer_optimize(&lower.q_star, RoundingMode::Lower, alpha, mdp.initial_state)
                .unwrap()
                .psi_hat;
            let pu = outer_optimize(&upper.q_star, RoundingMode::Upper, alpha, mdp.initial_state)
                .unwrap()
                .psi_hat;
            assert!(pl <= pu, "alpha {alpha}: lower {pl} above upper {pu}");
        }
    }

    #[test]
    fn greedy_policy_is_scale_invariant() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 21).unwrap();
        let q = solve(&mdp, &grid, RoundingMode::Lower, &SolveOptions::default())
            .unwrap()
            .q_star;
        let base = greedy_policy(&q);
        let mut scaled = q.clone();
        for v in scaled.values_mut() {
            *v *= 3.5;
        }
        let after = greedy_policy(&scaled);
        for s in 0..base.n_states() {
            for zi in 0..base.n_points() {
                assert_eq!(base.action(s, zi), after.action(s, zi));
            }
        }
    }

    #[test]
    fn execute_from_absorbing_state_is_a_single_record() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 21).unwrap();
        let q = solve(&mdp, &grid, RoundingMode::Lower, &SolveOptions::default())
            .unwrap()
            .q_star;
        let policy = greedy_policy(&q);
        let goal = mdp.absorbing[0];
        let mut tracker = BudgetTracker::new(grid.clone(), RoundingMode::Lower, mdp.gamma, 10);
        let mut rng = StdRng::seed_from_u64(0);
        let record = execute(&mdp, &policy, &mut tracker, goal, 50, &mut rng);
        assert_eq!(record.steps(), 0);
        assert_eq!(record.ret, 0.0);
        assert_eq!(record.states, vec![goal]);
        assert_eq!(record.budget_indices.len(), 1);
    }

    #[test]
    fn deterministic_chain_reproduces_worked_budgets() {
        // Rewards +1, -3, +1 from budget 0 at gamma 0.5 give budgets
        // 0, 2, -2, -2 before the absorbing tail.
        let n = 4;
        let mut transition = vec![vec![vec![0.0; n]; 1]; n];
        for s in 0..3 {
            transition[s][0][s + 1] = 1.0;
        }
        transition[3][0][3] = 1.0;
        let mdp = TabularMdp {
            n_states: n,
            n_actions: 1,
            gamma: 0.5,
            r_max: 3.0,
            initial_state: 0,
            absorbing: vec![3],
            reward: vec![vec![1.0], vec![-3.0], vec![1.0], vec![0.0]],
            transition,
        };
        let grid = BudgetGrid::symmetric(mdp.r_gamma(), 6).unwrap();
        let op = DiscretizedBellman::cvar(&mdp, &grid, RoundingMode::Lower);
        let policy = greedy_policy(&op.zero_table());
        let z0 = grid.round(RoundingMode::Lower, 0.0);
        let mut tracker = BudgetTracker::new(grid.clone(), RoundingMode::Lower, mdp.gamma, z0);
        let mut rng = StdRng::seed_from_u64(0);
        let record = execute(&mdp, &policy, &mut tracker, 0, 50, &mut rng);
        let budgets: Vec<f64> = record.budget_indices.iter().map(|&i| grid.value(i)).collect();
        assert_eq!(&budgets[..4], &[0.0, 2.0, -2.0, -2.0]);
        // Realized discounted return: 1 - 3/2 + 1/4 = -0.25.
        assert!((record.ret - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn replaying_a_record_reproduces_its_budgets() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 61).unwrap();
        let q = solve(&mdp, &grid, RoundingMode::Lower, &SolveOptions::default())
            .unwrap()
            .q_star;
        let policy = greedy_policy(&q);
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..20 {
            let start = rng.random_range(0..grid.n_points());
            let mut tracker = BudgetTracker::new(grid.clone(), RoundingMode::Lower, mdp.gamma, start);
            let record = execute(&mdp, &policy, &mut tracker, mdp.initial_state, 150, &mut rng);
            let mut replay = BudgetTracker::new(grid.clone(), RoundingMode::Lower, mdp.gamma, start);
            let mut budgets = vec![replay.index()];
            for &r in &record.rewards {
                budgets.push(replay.step(r));
            }
            assert_eq!(budgets, record.budget_indices);
        }
    }

    #[test]
    fn rollout_batches_are_reproducible() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 41).unwrap();
        let q = solve(&mdp, &grid, RoundingMode::Lower, &SolveOptions::default())
            .unwrap()
            .q_star;
        let policy = greedy_policy(&q);
        let run = || {
            rollout_batch(
                &mdp,
                &policy,
                &grid,
                RoundingMode::Lower,
                mdp.initial_state,
                20,
                64,
                150,
                77,
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn offgrid_matches_grid_values_on_grid_points() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 81).unwrap();
        let options = SolveOptions::default();
        let report = solve(&mdp, &grid, RoundingMode::Lower, &options).unwrap();
        let values = report.q_star.greedy_values();
        for s in [0, 7, 19] {
            for zi in [0, 13, 40, 80] {
                let off = evaluate_offgrid(
                    &report.q_star,
                    &mdp,
                    &grid,
                    RoundingMode::Lower,
                    s,
                    grid.value(zi),
                );
                assert!(
                    (off - values.get(s, zi)).abs() <= report.certified_error + 1e-12,
                    "state {s}, budget {zi}"
                );
            }
        }
    }

    #[test]
    fn offgrid_saturates_beyond_the_return_bound() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 81).unwrap();
        let report = solve(&mdp, &grid, RoundingMode::Lower, &SolveOptions::default()).unwrap();
        let s = mdp.initial_state;
        let at_bound = evaluate_offgrid(
            &report.q_star,
            &mdp,
            &grid,
            RoundingMode::Lower,
            s,
            mdp.r_gamma(),
        );
        for z in [mdp.r_gamma() + 5.0, mdp.r_gamma() * 2.0, 1e6] {
            let beyond = evaluate_offgrid(&report.q_star, &mdp, &grid, RoundingMode::Lower, s, z);
            assert_eq!(beyond, at_bound, "budget {z}");
        }
    }

    #[test]
    fn offgrid_value_lies_between_mode_solves() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), 81).unwrap();
        let options = SolveOptions::default();
        let (lower, upper) = crate::value_iteration::solve_pair(&mdp, &grid, &options).unwrap();
        let lower_values = lower.q_star.greedy_values();
        let upper_values = upper.q_star.greedy_values();
        let s = mdp.initial_state;
        for frac in [0.25, 0.5, 0.75] {
            let zi = 30;
            let z = grid.value(zi) + frac * grid.delta();
            let from_lower =
                evaluate_offgrid(&lower.q_star, &mdp, &grid, RoundingMode::Lower, s, z);
            let from_upper =
                evaluate_offgrid(&upper.q_star, &mdp, &grid, RoundingMode::Upper, s, z);
            let lo = lower_values.get(s, zi) - lower.certified_error - 1e-9;
            let hi = upper_values.get(s, zi + 1) + upper.certified_error + 1e-9;
            assert!(from_lower >= lo && from_lower <= hi);
            assert!(from_upper >= lo && from_upper <= hi);
            assert!(from_lower <= from_upper + lower.certified_error + upper.certified_error);
        }
    }
}
