//! Model-free static CVaR Q-learning.
//!
//! Per environment transition `(s, a, r, s')`, the budget successor
//! `z' = p(e((r + z) / gamma))` is known deterministically for every grid
//! budget `z`, so one sample supports a block update of the whole Q-row
//! `(s, ., a)`: the episode is relabeled as if it had started from each grid
//! budget. Step sizes are driven by per-`(s, a)` visit counts; exploration is
//! epsilon-greedy on the behavior budget.

use std::io::Write;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::bellman::{DiscretizedBellman, QTable};
use crate::budget::{BudgetGrid, RoundingMode};
use crate::mdp::TabularMdp;
use crate::{Error, Result};

/// Visit-count step sizes `beta(n) = max(kappa_min, kappa / (1 + lambda n))`.
///
/// With `kappa_min > 0` the squares of the step sizes are not summable, so
/// the almost-sure convergence guarantee only applies to the strict variant
/// with `kappa_min = 0`.
#[derive(Debug, Clone, Copy)]
pub struct StepSizeSchedule {
    pub kappa: f64,
    pub kappa_min: f64,
    pub lambda: f64,
}

impl Default for StepSizeSchedule {
    fn default() -> Self {
        StepSizeSchedule {
            kappa: 1.0,
            kappa_min: 1e-4,
            lambda: 0.01,
        }
    }
}

impl StepSizeSchedule {
    /// Strict Robbins-Monro schedule (no floor): summable squares.
    pub fn robbins_monro(kappa: f64, lambda: f64) -> Self {
        StepSizeSchedule {
            kappa,
            kappa_min: 0.0,
            lambda,
        }
    }

    pub fn beta(&self, n: u64) -> f64 {
        (self.kappa / (1.0 + self.lambda * n as f64)).max(self.kappa_min)
    }
}

/// Linear epsilon decay from `eps_start` to `eps_end` over `decay_steps`
/// environment steps, clamped at `eps_end` afterwards.
#[derive(Debug, Clone, Copy)]
pub struct ExplorationSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay_steps: u64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule {
            eps_start: 1.0,
            eps_end: 0.1,
            decay_steps: 100_000_000,
        }
    }
}

impl ExplorationSchedule {
    pub fn constant(eps: f64) -> Self {
        ExplorationSchedule {
            eps_start: eps,
            eps_end: eps,
            decay_steps: 1,
        }
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

#[derive(Debug, Clone)]
pub struct LearnOptions {
    pub episodes: usize,
    /// Episode length cap; episodes also end at absorbing states.
    pub step_cap: usize,
    pub step_sizes: StepSizeSchedule,
    pub exploration: ExplorationSchedule,
    /// Episode start states, drawn uniformly; `None` uses the MDP's initial state.
    pub reset_states: Option<Vec<usize>>,
    /// Trace cadence in environment steps (0 disables the trace).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            episodes: 75_000,
            step_cap: 150,
            step_sizes: StepSizeSchedule::default(),
            exploration: ExplorationSchedule::default(),
            reset_states: None,
            checkpoint_every: 1000,
            seed: 0,
        }
    }
}

/// One row of the training trace.
#[derive(Debug, Clone)]
pub struct TracePoint {
    pub step: u64,
    pub episode: usize,
    pub epsilon: f64,
    /// Mean step size used since the previous checkpoint.
    pub mean_beta: f64,
    /// Sup-norm distance to the reference table, when one was supplied.
    pub sup_error_vs_ref: Option<f64>,
}

#[derive(Debug)]
pub struct LearnResult {
    pub q: QTable,
    /// Visit counts per `(s, a)`, flattened `s * n_actions + a`.
    pub visit_counts: Vec<u64>,
    pub total_steps: u64,
    pub episodes: usize,
    pub trace: Vec<TracePoint>,
}

/// Apply the block update for one observed transition `(s, a, -, s')` with
/// step size `beta`: every budget-grid row entry `(s, z, a)` moves toward its
/// relabeled one-sample target. Reads are from the pre-update table.
pub fn apply_block_update(
    q: &mut QTable,
    op: &DiscretizedBellman,
    s: usize,
    a: usize,
    next_state: usize,
    beta: f64,
) {
    let n_points = q.n_points();
    let n_actions = q.n_actions();
    let gamma = op.gamma();
    let next_z = op.next_z_row(s, a);
    let rtilde = op.rtilde_row(s, a);
    // Bootstrap reads overlap the written row only on self-transitions.
    let snapshot: Option<Vec<f64>> = if next_state == s {
        Some((0..n_points).map(|zi| q.get(s, zi, a)).collect())
    } else {
        None
    };
    for zi in 0..n_points {
        let zn = next_z[zi];
        let bootstrap = match &snapshot {
            Some(snap) => {
                let mut best = f64::NEG_INFINITY;
                for ap in 0..n_actions {
                    let v = if ap == a { snap[zn] } else { q.get(next_state, zn, ap) };
                    best = best.max(v);
                }
                best
            }
            None => q.max_over_actions(next_state, zn),
        };
        let target = rtilde[zi] + gamma * bootstrap;
        let old = q.get(s, zi, a);
        q.set(s, zi, a, old + beta * (target - old));
    }
}

/// Run static CVaR Q-learning against the MDP as a simulator.
///
/// Each episode draws a start state, a behavior budget uniform over the
/// grid, and steps epsilon-greedily until an absorbing state or the step
/// cap. Every environment step counts one `(s, a)` visit and performs one
/// block update with the step size read at the pre-increment count.
pub fn learn(
    mdp: &TabularMdp,
    grid: &BudgetGrid,
    mode: RoundingMode,
    options: &LearnOptions,
    reference: Option<&QTable>,
) -> Result<LearnResult> {
    if options.episodes == 0 || options.step_cap == 0 {
        return Err(Error::InvalidInput("episodes and step_cap must be >= 1".to_string()));
    }
    if let Some(resets) = &options.reset_states {
        if resets.is_empty() || resets.iter().any(|&s| s >= mdp.n_states) {
            return Err(Error::InvalidInput("invalid reset states".to_string()));
        }
    }
    mdp.check()?;

    let op = DiscretizedBellman::cvar(mdp, grid, mode);
    let mut q = op.zero_table();
    let mut counts = vec![0u64; mdp.n_states * mdp.n_actions];
    let mut rng = StdRng::seed_from_u64(options.seed);
    let mut trace = Vec::new();
    let mut step: u64 = 0;
    let mut beta_sum = 0.0;
    let mut beta_n = 0u64;

    for episode in 0..options.episodes {
        let mut s = match &options.reset_states {
            Some(resets) => resets[rng.random_range(0..resets.len())],
            None => mdp.initial_state,
        };
        let mut zi = rng.random_range(0..grid.n_points());
        let mut steps_in_episode = 0;
        while !mdp.is_absorbing(s) && steps_in_episode < options.step_cap {
            let eps = options.exploration.epsilon(step);
            let a = if rng.random::<f64>() < eps {
                rng.random_range(0..mdp.n_actions)
            } else {
                q.argmax_action(s, zi)
            };
            let (next_state, _reward) = mdp.sample_transition(s, a, &mut rng);
            let beta = options.step_sizes.beta(counts[s * mdp.n_actions + a]);
            counts[s * mdp.n_actions + a] += 1;
            apply_block_update(&mut q, &op, s, a, next_state, beta);
            zi = op.next_z_row(s, a)[zi];
            s = next_state;
            step += 1;
            steps_in_episode += 1;
            beta_sum += beta;
            beta_n += 1;
            if options.checkpoint_every > 0 && step % options.checkpoint_every as u64 == 0 {
                trace.push(TracePoint {
                    step,
                    episode,
                    epsilon: eps,
                    mean_beta: beta_sum / beta_n as f64,
                    sup_error_vs_ref: reference.map(|r| q.sup_dist(r)),
                });
                beta_sum = 0.0;
                beta_n = 0;
            }
        }
    }

    Ok(LearnResult {
        q,
        visit_counts: counts,
        total_steps: step,
        episodes: options.episodes,
        trace,
    })
}

/// Write the training trace as CSV. The error column is blank when no
/// reference table was supplied.
pub fn write_trace_csv(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,episode,epsilon,mean_beta,sup_error_vs_ref")?;
    for point in trace {
        let err = point
            .sup_error_vs_ref
            .map(|e| e.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            point.step, point.episode, point.epsilon, point.mean_beta, err
        )?;
    }
    Ok(())
}
