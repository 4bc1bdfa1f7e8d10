//! Q-tables over the augmented state space and the discretized CVaR Bellman
//! sweeps.
//!
//! A sweep is synchronous: the output table is computed entirely from the
//! input table, which makes the per-sweep contraction property directly
//! testable. Budget successors and transformed rewards depend only on
//! `(s, a, z)` and are precomputed once.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::budget::{bauerle_reward, transformed_reward, BudgetGrid, RoundingMode};
use crate::mdp::TabularMdp;
use crate::Result;

/// Action-value table indexed by `(state, budget index, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    grid: BudgetGrid,
    /// Cap on converged entry magnitudes, `r_max / (1 - gamma)`. Diagnostic.
    bound: f64,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize, grid: BudgetGrid, bound: f64) -> Self {
        let len = n_states * grid.n_points() * n_actions;
        QTable {
            n_states,
            n_actions,
            grid,
            bound,
            values: vec![0.0; len],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn grid(&self) -> &BudgetGrid {
        &self.grid
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[inline]
    fn idx(&self, s: usize, zi: usize, a: usize) -> usize {
        (s * self.grid.n_points() + zi) * self.n_actions + a
    }

    #[inline]
    pub fn get(&self, s: usize, zi: usize, a: usize) -> f64 {
        self.values[self.idx(s, zi, a)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, zi: usize, a: usize, v: f64) {
        let i = self.idx(s, zi, a);
        self.values[i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Copy of the action slice at `(s, zi)`.
    pub fn action_values(&self, s: usize, zi: usize) -> &[f64] {
        let base = (s * self.grid.n_points() + zi) * self.n_actions;
        &self.values[base..base + self.n_actions]
    }

    /// Greedy action with ties broken toward the lowest action index.
    pub fn argmax_action(&self, s: usize, zi: usize) -> usize {
        let vals = self.action_values(s, zi);
        let mut best = 0;
        for (a, &v) in vals.iter().enumerate().skip(1) {
            if v > vals[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_over_actions(&self, s: usize, zi: usize) -> f64 {
        self.action_values(s, zi)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_dist(&self, other: &QTable) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "table shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0_f64, f64::max)
    }

    /// Pointwise maximum over the action axis.
    pub fn greedy_values(&self) -> ValueTable {
        let n_points = self.grid.n_points();
        let mut values = Vec::with_capacity(self.n_states * n_points);
        for s in 0..self.n_states {
            for zi in 0..n_points {
                values.push(self.max_over_actions(s, zi));
            }
        }
        ValueTable {
            n_states: self.n_states,
            n_points,
            values,
        }
    }

    pub fn to_file(&self, mode: RoundingMode, gamma: f64, mdp_hash: u64) -> QTableFile {
        QTableFile {
            n_states: self.n_states,
            n_points: self.grid.n_points(),
            n_actions: self.n_actions,
            delta: self.grid.delta(),
            gamma,
            mode,
            mdp_hash,
            grid: self.grid.clone(),
            values: self.values.clone(),
        }
    }

    pub fn write_json(&self, path: &Path, mode: RoundingMode, gamma: f64, mdp_hash: u64) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &self.to_file(mode, gamma, mdp_hash))?;
        Ok(())
    }
}

/// On-disk layout of a Q-table: a header describing the shape and grid,
/// followed by row-major values (state outermost, then budget, then action).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QTableFile {
    pub n_states: usize,
    pub n_points: usize,
    pub n_actions: usize,
    pub delta: f64,
    pub gamma: f64,
    pub mode: RoundingMode,
    /// Fingerprint of the MDP the table was solved on.
    pub mdp_hash: u64,
    pub grid: BudgetGrid,
    pub values: Vec<f64>,
}

impl QTableFile {
    pub fn read_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let table: QTableFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        Ok(table)
    }

    pub fn into_table(self) -> QTable {
        let bound = self.grid.r_gamma();
        QTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            grid: self.grid,
            bound,
            values: self.values,
        }
    }
}

/// State-value table indexed by `(state, budget index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    n_states: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn get(&self, s: usize, zi: usize) -> f64 {
        self.values[s * self.n_points + zi]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest drop along the budget axis; a converged table under
    /// non-positive rewards should make this nonpositive up to float slack.
    pub fn max_budget_axis_drop(&self) -> f64 {
        let mut worst = 0.0_f64;
        for s in 0..self.n_states {
            for zi in 1..self.n_points {
                worst = worst.max(self.get(s, zi - 1) - self.get(s, zi));
            }
        }
        worst
    }

    pub fn is_nondecreasing_in_budget(&self, tol: f64) -> bool {
        self.max_budget_axis_drop() <= tol
    }
}

/// Precomputed sweep of a discretized Bellman operator on the augmented MDP.
///
/// Holds, per `(s, a)`: the nonzero transition support, the budget successor
/// index for every grid point, and the per-step reward row. The CVaR variant
/// uses the transformed reward; the baseline variant uses the all-zero
/// reward, whose unique bounded fixed point is the zero table.
pub struct DiscretizedBellman {
    n_states: usize,
    n_actions: usize,
    n_points: usize,
    gamma: f64,
    bound: f64,
    grid: BudgetGrid,
    support: Vec<Vec<(usize, f64)>>,
    next_z: Vec<Vec<usize>>,
    rtilde: Vec<Vec<f64>>,
}

impl DiscretizedBellman {
    pub fn cvar(mdp: &TabularMdp, grid: &BudgetGrid, mode: RoundingMode) -> Self {
        Self::build(mdp, grid, mode, transformed_reward)
    }

    pub fn bauerle(mdp: &TabularMdp, grid: &BudgetGrid, mode: RoundingMode) -> Self {
        Self::build(mdp, grid, mode, bauerle_reward)
    }

    fn build(
        mdp: &TabularMdp,
        grid: &BudgetGrid,
        mode: RoundingMode,
        step_reward: fn(f64, f64) -> f64,
    ) -> Self {
        let n_points = grid.n_points();
        let mut support = Vec::with_capacity(mdp.n_states * mdp.n_actions);
        let mut next_z = Vec::with_capacity(mdp.n_states * mdp.n_actions);
        let mut rtilde = Vec::with_capacity(mdp.n_states * mdp.n_actions);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let row: Vec<(usize, f64)> = mdp.transition[s][a]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(sp, &p)| (sp, p))
                    .collect();
                support.push(row);
                let r = mdp.reward[s][a];
                next_z.push(
                    (0..n_points)
                        .map(|zi| grid.next_budget(mode, zi, r, mdp.gamma))
                        .collect(),
                );
                rtilde.push((0..n_points).map(|zi| step_reward(grid.value(zi), r)).collect());
            }
        }
        DiscretizedBellman {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            n_points,
            gamma: mdp.gamma,
            bound: mdp.r_gamma(),
            grid: grid.clone(),
            support,
            next_z,
            rtilde,
        }
    }

    pub fn zero_table(&self) -> QTable {
        QTable::zeros(self.n_states, self.n_actions, self.grid.clone(), self.bound)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Precomputed budget successor indices for `(s, a)`, one per grid point.
    pub fn next_z_row(&self, s: usize, a: usize) -> &[usize] {
        &self.next_z[s * self.n_actions + a]
    }

    /// Precomputed per-step rewards for `(s, a)`, one per grid point.
    pub fn rtilde_row(&self, s: usize, a: usize) -> &[f64] {
        &self.rtilde[s * self.n_actions + a]
    }

    /// One synchronous sweep. Returns the new table and the sup-norm change.
    pub fn sweep(&self, q_in: &QTable) -> (QTable, f64) {
        assert_eq!(q_in.n_states(), self.n_states);
        assert_eq!(q_in.n_actions(), self.n_actions);
        assert_eq!(q_in.n_points(), self.n_points);

        // Greedy state values of the input table, read-only during the sweep.
        let v_in = q_in.greedy_values();
        let mut q_out = self.zero_table();
        let mut delta = 0.0_f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let sa = s * self.n_actions + a;
                let support = &self.support[sa];
                let next_z = &self.next_z[sa];
                let rtilde = &self.rtilde[sa];
                for zi in 0..self.n_points {
                    let zn = next_z[zi];
                    let mut future = 0.0;
                    for &(sp, p) in support {
                        future += p * v_in.get(sp, zn);
                    }
                    let new = rtilde[zi] + self.gamma * future;
                    delta = delta.max((new - q_in.get(s, zi, a)).abs());
                    q_out.set(s, zi, a, new);
                }
            }
        }
        (q_out, delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crater::{build_crater_walk, CraterWalkConfig};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn crater_setup(k: usize) -> (TabularMdp, BudgetGrid) {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        let grid = BudgetGrid::symmetric(mdp.r_gamma(), k).unwrap();
        (mdp, grid)
    }

    fn random_table(op: &DiscretizedBellman, bound: f64, rng: &mut StdRng) -> QTable {
        let mut q = op.zero_table();
        for v in q.values_mut() {
            *v = rng.random_range(-bound..bound);
        }
        q
    }

    #[test]
    fn sweep_of_zero_table_yields_step_rewards() {
        let (mdp, grid) = crater_setup(10);
        let op = DiscretizedBellman::cvar(&mdp, &grid, RoundingMode::Lower);
        let (q1, _) = op.sweep(&op.zero_table());
        for s in 0..mdp.n_states {
            for zi in 0..grid.n_points() {
                for a in 0..mdp.n_actions {
                    let expected = transformed_reward(grid.value(zi), mdp.reward[s][a]);
                    assert_eq!(q1.get(s, zi, a), expected);
                }
            }
        }
        // Absorbing entries stay at zero for every budget.
        let goal = mdp.absorbing[0];
        for zi in 0..grid.n_points() {
            for a in 0..mdp.n_actions {
                assert_eq!(q1.get(goal, zi, a), 0.0);
            }
        }
    }

    #[test]
    fn sweep_contracts_random_pairs() {
        let (mdp, grid) = crater_setup(25);
        let mut rng = StdRng::seed_from_u64(99);
        for mode in [RoundingMode::Lower, RoundingMode::Upper] {
            let op = DiscretizedBellman::cvar(&mdp, &grid, mode);
            for _ in 0..20 {
                let q1 = random_table(&op, mdp.r_gamma(), &mut rng);
                let q2 = random_table(&op, mdp.r_gamma(), &mut rng);
                let (t1, _) = op.sweep(&q1);
                let (t2, _) = op.sweep(&q2);
                assert!(t1.sup_dist(&t2) <= mdp.gamma * q1.sup_dist(&q2) + 1e-12);
            }
        }
    }

    #[test]
    fn baseline_fixes_zero_exactly() {
        let (mdp, grid) = crater_setup(10);
        let op = DiscretizedBellman::bauerle(&mdp, &grid, RoundingMode::Lower);
        let (q1, delta) = op.sweep(&op.zero_table());
        assert_eq!(delta, 0.0);
        assert!(q1.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_scales_constant_tables_by_gamma() {
        let (mdp, grid) = crater_setup(10);
        let op = DiscretizedBellman::bauerle(&mdp, &grid, RoundingMode::Upper);
        let mut q = op.zero_table();
        for v in q.values_mut() {
            *v = 4.0;
        }
        let (q1, _) = op.sweep(&q);
        for &v in q1.values() {
            assert!((v - mdp.gamma * 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_iterates_inside_geometric_envelope() {
        let (mdp, grid) = crater_setup(10);
        let op = DiscretizedBellman::bauerle(&mdp, &grid, RoundingMode::Lower);
        let mut rng = StdRng::seed_from_u64(3);
        let mut q = random_table(&op, mdp.r_gamma(), &mut rng);
        let norm0 = q.max_abs();
        for _ in 0..200 {
            q = op.sweep(&q).0;
        }
        let envelope = mdp.gamma.powi(200) * norm0;
        assert!(q.max_abs() <= envelope * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn sweep_preserves_budget_monotonicity() {
        // Non-decreasing input along z plus non-positive rewards stays
        // non-decreasing after one sweep.
        let (mdp, grid) = crater_setup(20);
        assert!(mdp.has_nonpositive_rewards());
        let mut rng = StdRng::seed_from_u64(17);
        for mode in [RoundingMode::Lower, RoundingMode::Upper] {
            let op = DiscretizedBellman::cvar(&mdp, &grid, mode);
            for _ in 0..10 {
                let mut q = op.zero_table();
                for s in 0..mdp.n_states {
                    for a in 0..mdp.n_actions {
                        let mut level = rng.random_range(-100.0..0.0);
                        for zi in 0..grid.n_points() {
                            level += rng.random_range(0.0..1.0);
                            q.set(s, zi, a, level);
                        }
                    }
                }
                let (q1, _) = op.sweep(&q);
                assert!(q1.greedy_values().is_nondecreasing_in_budget(1e-12));
                for a in 0..mdp.n_actions {
                    for s in 0..mdp.n_states {
                        for zi in 1..grid.n_points() {
                            assert!(q1.get(s, zi, a) >= q1.get(s, zi - 1, a) - 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_values_take_pointwise_max() {
        let (mdp, grid) = crater_setup(5);
        let op = DiscretizedBellman::cvar(&mdp, &grid, RoundingMode::Lower);
        let mut q = op.zero_table();
        for s in 0..mdp.n_states {
            for zi in 0..grid.n_points() {
                for a in 0..mdp.n_actions {
                    q.set(s, zi, a, -((a + 1) as f64) * (s + zi + 1) as f64);
                }
            }
        }
        let v = q.greedy_values();
        for s in 0..mdp.n_states {
            for zi in 0..grid.n_points() {
                assert_eq!(v.get(s, zi), q.get(s, zi, 0));
                assert_eq!(q.argmax_action(s, zi), 0);
            }
        }
    }

    #[test]
    fn table_file_round_trip_is_bit_exact() {
        let (mdp, grid) = crater_setup(7);
        let op = DiscretizedBellman::cvar(&mdp, &grid, RoundingMode::Upper);
        let mut rng = StdRng::seed_from_u64(5);
        let q = random_table(&op, 50.0, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        q.write_json(&path, RoundingMode::Upper, mdp.gamma, mdp.hash64()).unwrap();
        let file = QTableFile::read_json(&path).unwrap();
        assert_eq!(file.mode, RoundingMode::Upper);
        assert_eq!(file.mdp_hash, mdp.hash64());
        let back = file.into_table();
        for (i, (a, b)) in q.values().iter().zip(back.values()).enumerate() {
            assert!(
                a.to_bits() == b.to_bits(),
                "entry {i}: {a:?} ({:#x}) != {b:?} ({:#x})",
                a.to_bits(),
                b.to_bits()
            );
        }
        assert_eq!(back.grid().value(3), q.grid().value(3));
    }
}
