//! Nominal tabular MDP representation, validation, and the risk-neutral
//! value-iteration oracle.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for transition rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite discounted MDP with dense transition rows.
///
/// Transition rows are stored dense; the state spaces this crate targets are
/// small enough that sparse storage buys nothing. Instances are immutable
/// after construction and safe to share across solver workers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Discount factor in `[0, 1)`.
    pub gamma: f64,
    /// Bound on `|reward(s, a)|`.
    pub r_max: f64,
    pub initial_state: usize,
    /// States that loop onto themselves forever with zero reward.
    pub absorbing: Vec<usize>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    /// `transition[s][a][s']`, each row a probability vector over states.
    pub transition: Vec<Vec<Vec<f64>>>,
}

impl TabularMdp {
    /// Return bound `r_max / (1 - gamma)` on the discounted return.
    pub fn r_gamma(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        self.absorbing.contains(&s)
    }

    /// True when every reward is `<= 0`, the sign condition under which the
    /// ordering and monotonicity guarantees of the bounding operators hold.
    pub fn has_nonpositive_rewards(&self) -> bool {
        self.reward.iter().flatten().all(|&r| r <= 0.0)
    }

    /// Distinct reward values, for closure checks over the budget grid.
    pub fn reward_values(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = self.reward.iter().flatten().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        vals
    }

    /// Diagnostic validation: returns one description per violated invariant,
    /// empty when the MDP is well formed. Nothing is ever silently repaired.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.n_states == 0 {
            violations.push("n_states must be positive".to_string());
        }
        if self.n_actions == 0 {
            violations.push("n_actions must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            violations.push(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(self.r_max >= 0.0) {
            violations.push(format!("r_max {} is not nonnegative", self.r_max));
        }
        if self.initial_state >= self.n_states {
            violations.push(format!("initial_state {} out of range", self.initial_state));
        }
        for &s in &self.absorbing {
            if s >= self.n_states {
                violations.push(format!("absorbing state {s} out of range"));
            }
        }
        if self.reward.len() != self.n_states || self.transition.len() != self.n_states {
            violations.push("reward/transition tables do not have n_states rows".to_string());
            return violations;
        }
        for s in 0..self.n_states {
            if self.reward[s].len() != self.n_actions || self.transition[s].len() != self.n_actions {
                violations.push(format!("state {s}: tables do not have n_actions columns"));
                continue;
            }
            for a in 0..self.n_actions {
                let row = &self.transition[s][a];
                if row.len() != self.n_states {
                    violations.push(format!("transition row ({s}, {a}) has wrong length"));
                    continue;
                }
                if row.iter().any(|&p| p < 0.0) {
                    violations.push(format!("transition row ({s}, {a}) has a negative entry"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    violations.push(format!("transition row ({s}, {a}) sums to {sum}, not 1"));
                }
                let r = self.reward[s][a];
                if r.abs() > self.r_max {
                    violations.push(format!("reward({s}, {a}) = {r} exceeds r_max = {}", self.r_max));
                }
            }
            if self.is_absorbing(s) {
                for a in 0..self.n_actions {
                    if (self.transition[s][a][s] - 1.0).abs() > ROW_SUM_TOL {
                        violations.push(format!(
                            "absorbing state {s}, action {a}: transition does not stay with mass 1"
                        ));
                    }
                    if self.reward[s][a] != 0.0 {
                        violations.push(format!(
                            "absorbing state {s}, action {a}: reward {} is not 0",
                            self.reward[s][a]
                        ));
                    }
                }
            }
        }
        violations
    }

    /// Like [`validate`](Self::validate) but as a hard error.
    pub fn check(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(violations.join("; ")))
        }
    }

    /// Draw one environment step. Identical seeds reproduce identical draws.
    pub fn sample_transition<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> (usize, f64) {
        let row = &self.transition[s][a];
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut next = self.n_states - 1;
        for (sp, &p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                next = sp;
                break;
            }
        }
        (next, self.reward[s][a])
    }

    /// Stable 64-bit fingerprint of the model, used to bind solved tables to
    /// the environment they were solved on.
    pub fn hash64(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.n_states.hash(&mut h);
        self.n_actions.hash(&mut h);
        self.gamma.to_bits().hash(&mut h);
        self.r_max.to_bits().hash(&mut h);
        self.initial_state.hash(&mut h);
        self.absorbing.hash(&mut h);
        for row in self.reward.iter().flatten() {
            row.to_bits().hash(&mut h);
        }
        for p in self.transition.iter().flatten().flatten() {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mdp: TabularMdp = serde_json::from_reader(std::io::BufReader::new(file))?;
        Ok(mdp)
    }
}

/// Standard risk-neutral value iteration, used as the independent oracle for
/// the `alpha = 1` consistency checks.
///
/// Stops once the sup-norm change between sweeps drops below `tol`; the
/// result then satisfies the optimality recursion within `gamma * tol / (1 - gamma)`.
pub fn risk_neutral_value_iteration(mdp: &TabularMdp, tol: f64) -> Vec<f64> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut v = vec![0.0; mdp.n_states];
    loop {
        let next = risk_neutral_sweep(mdp, &v);
        let delta = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        v = next;
        if delta < tol {
            return v;
        }
    }
}

/// One synchronous Bellman optimality sweep over state values.
pub fn risk_neutral_sweep(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    let future: f64 = mdp.transition[s][a]
                        .iter()
                        .zip(v)
                        .map(|(&p, &vs)| p * vs)
                        .sum();
                    mdp.reward[s][a] + mdp.gamma * future
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}
