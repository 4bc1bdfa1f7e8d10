//! Empirical CVaR estimation, an exact small-instance oracle, and the
//! risk-level sweep that turns one solved table into per-alpha metrics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bellman::QTable;
use crate::budget::{BudgetGrid, RoundingMode};
use crate::mdp::TabularMdp;
use crate::policy::{greedy_policy, outer_optimize, rollout_batch, PolicyMap, RolloutRecord};
use crate::{Error, Result};

/// A batch of realized discounted returns with the settings that produced it.
#[derive(Debug, Clone)]
pub struct ReturnSample {
    pub returns: Vec<f64>,
    pub seed: u64,
    pub alpha: f64,
    pub mode: RoundingMode,
    pub bins: usize,
}

impl ReturnSample {
    pub fn from_records(
        records: &[RolloutRecord],
        seed: u64,
        alpha: f64,
        mode: RoundingMode,
        bins: usize,
    ) -> Self {
        ReturnSample {
            returns: records.iter().map(|r| r.ret).collect(),
            seed,
            alpha,
            mode,
            bins,
        }
    }

    pub fn within_return_bound(&self, r_gamma: f64) -> bool {
        self.returns.iter().all(|r| r.abs() <= r_gamma + 1e-9)
    }
}

/// Lower-tail mean estimator: sorts the sample ascending and averages the
/// worst `max(1, ceil(alpha * n))` values. Coincides with the exact
/// fractional-atom definition as the sample grows.
pub fn empirical_cvar(returns: &[f64], alpha: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1]")));
    }
    let m = tail_size(returns.len(), alpha);
    let mut sorted = returns.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted[..m].iter().sum::<f64>() / m as f64)
}

/// Standard error of the lower-tail mean, from the tail sample itself.
pub fn empirical_cvar_standard_error(returns: &[f64], alpha: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptySample);
    }
    let m = tail_size(returns.len(), alpha);
    if m < 2 {
        return Ok(0.0);
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = &sorted[..m];
    let mean = tail.iter().sum::<f64>() / m as f64;
    let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Ok((var / m as f64).sqrt())
}

fn tail_size(n: usize, alpha: f64) -> usize {
    // Guard the ceil against products like 0.1 * 10000 landing an ulp high.
    (((alpha * n as f64) - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// CVaR of a finite distribution of `(value, probability)` atoms, filling the
/// lower tail up to mass `alpha` with fractional weight on the boundary atom.
pub fn cvar_of_distribution(atoms: &[(f64, f64)], alpha: f64) -> f64 {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut remaining = alpha;
    let mut acc = 0.0;
    for (value, prob) in sorted {
        if remaining <= 0.0 {
            break;
        }
        let w = prob.min(remaining);
        acc += w * value;
        remaining -= w;
    }
    let taken = alpha - remaining.max(0.0);
    acc / taken
}

/// Result of exact trajectory enumeration under a deterministic augmented
/// policy, truncated at a fixed horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    pub exact_cvar: f64,
    pub truncation_horizon: usize,
    /// Worst-case return mass beyond the horizon:
    /// `gamma^H * r_max / (1 - gamma)`. The infinite-horizon CVaR lies within
    /// this bound of `exact_cvar`.
    pub truncation_bound: f64,
    pub enumerated_paths: usize,
}

/// Enumerate every length-`horizon` trajectory of the policy from
/// `(initial_state, z_start_index)`, with exact probabilities, and compute
/// the CVaR of the resulting return distribution.
///
/// Branches terminate early at absorbing states (their return is exact).
/// Exceeding `path_budget` leaves is a hard error, never a silent truncation.
pub fn exact_policy_cvar(
    mdp: &TabularMdp,
    policy: &PolicyMap,
    grid: &BudgetGrid,
    mode: RoundingMode,
    z_start_index: usize,
    alpha: f64,
    horizon: usize,
    path_budget: usize,
) -> Result<OracleResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    let mut stack = vec![(mdp.initial_state, z_start_index, 0usize, 1.0f64, 0.0f64, 1.0f64)];
    while let Some((s, zi, depth, prob, ret, discount)) = stack.pop() {
        if mdp.is_absorbing(s) || depth == horizon {
            if atoms.len() >= path_budget {
                return Err(Error::PathBudgetExceeded { budget: path_budget });
            }
            atoms.push((ret, prob));
            continue;
        }
        let a = policy.action(s, zi);
        let r = mdp.reward[s][a];
        let zn = grid.next_budget(mode, zi, r, mdp.gamma);
        for (sp, &p) in mdp.transition[s][a].iter().enumerate() {
            if p > 0.0 {
                stack.push((sp, zn, depth + 1, prob * p, ret + discount * r, discount * mdp.gamma));
            }
        }
    }
    Ok(OracleResult {
        exact_cvar: cvar_of_distribution(&atoms, alpha),
        truncation_horizon: horizon,
        truncation_bound: mdp.gamma.powi(horizon as i32) * mdp.r_gamma(),
        enumerated_paths: atoms.len(),
    })
}

/// Discounted count of steps whose reward is at or below the threshold
/// (set to the crater penalty to count crater hits).
pub fn discounted_crater_entries(record: &RolloutRecord, threshold: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in &record.rewards {
        if r <= threshold {
            total += discount;
        }
        discount *= record.gamma;
    }
    total
}

/// One row of the risk-level sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub z_star: f64,
    pub psi_lower: Option<f64>,
    pub psi_upper: Option<f64>,
    pub cvar_empirical: f64,
    pub mean_return: f64,
    pub crater_entries_mean: f64,
    pub n_rollouts: usize,
    pub bins: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub alphas: Vec<f64>,
    pub n_rollouts: usize,
    pub step_cap: usize,
    /// Rewards at or below this count as crater entries.
    pub crater_reward_threshold: f64,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            alphas: vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            n_rollouts: 10_000,
            step_cap: 150,
            crater_reward_threshold: -10.0,
            seed: 0,
        }
    }
}

/// For each risk level: optimal starting budget, bound values, and rollout
/// metrics under the induced policy. One solved table serves every alpha;
/// only the outer scan and the rollouts are repeated.
///
/// The policy and `z_star` come from the primary table; the secondary table,
/// when given, only contributes the other bound column.
pub fn alpha_sweep(
    mdp: &TabularMdp,
    primary: &QTable,
    primary_mode: RoundingMode,
    secondary: Option<(&QTable, RoundingMode)>,
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    let grid = primary.grid();
    let policy = greedy_policy(primary);
    let mut rows = Vec::with_capacity(settings.alphas.len());
    for (i, &alpha) in settings.alphas.iter().enumerate() {
        let outer = outer_optimize(primary, primary_mode, alpha, mdp.initial_state)?;
        let mut psi_lower = None;
        let mut psi_upper = None;
        match primary_mode {
            RoundingMode::Lower => psi_lower = Some(outer.psi_hat),
            RoundingMode::Upper => psi_upper = Some(outer.psi_hat),
        }
        if let Some((table, mode)) = secondary {
            let other = outer_optimize(table, mode, alpha, mdp.initial_state)?;
            match mode {
                RoundingMode::Lower => psi_lower = Some(other.psi_hat),
                RoundingMode::Upper => psi_upper = Some(other.psi_hat),
            }
        }
        let batch_seed = settings.seed.wrapping_add(i as u64 * 0x9E37_79B9);
        let records = rollout_batch(
            mdp,
            &policy,
            grid,
            primary_mode,
            mdp.initial_state,
            outer.z_index,
            settings.n_rollouts,
            settings.step_cap,
            batch_seed,
        );
        let returns: Vec<f64> = records.iter().map(|r| r.ret).collect();
        let cvar = empirical_cvar(&returns, alpha)?;
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let craters = records
            .iter()
            .map(|r| discounted_crater_entries(r, settings.crater_reward_threshold))
            .sum::<f64>()
            / records.len() as f64;
        rows.push(SweepRow {
            alpha,
            z_star: outer.z_star,
            psi_lower,
            psi_upper,
            cvar_empirical: cvar,
            mean_return: mean,
            crater_entries_mean: craters,
            n_rollouts: settings.n_rollouts,
            bins: grid.n_points(),
            seed: settings.seed,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "alpha,z_star,psi_lower,psi_upper,cvar_empirical,mean_return,crater_entries_mean,n_rollouts,bins,seed"
    )?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.alpha,
            row.z_star,
            row.psi_lower.map(|v| v.to_string()).unwrap_or_default(),
            row.psi_upper.map(|v| v.to_string()).unwrap_or_default(),
            row.cvar_empirical,
            row.mean_return,
            row.crater_entries_mean,
            row.n_rollouts,
            row.bins,
            row.seed
        )?;
    }
    Ok(())
}

/// One-column CSV of raw returns, for external plotting.
pub fn write_returns_csv(path: &Path, returns: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "return")?;
    for r in returns {
        writeln!(out, "{r}")?;
    }
    Ok(())
}
