//! Tabular solver and learner for infinite-horizon static-CVaR Markov
//! decision processes.
//!
//! The conditional value-at-risk of a discounted return depends on whole
//! trajectories, so it admits no Bellman recursion over the nominal state
//! alone. This crate works in an augmented state space `(s, z)` where `z` is
//! a running budget that tracks accumulated reward rescaled by `1/gamma`
//! each step. On that space it provides:
//!
//! - a dense-reward CVaR Bellman operator together with lower/upper bounding
//!   variants on a uniform budget grid ([`bellman`], [`budget`]),
//! - value iteration with a sup-norm stopping certificate ([`value_iteration`]),
//! - model-free Q-learning with budget-relabeling block updates ([`q_learning`]),
//! - the outer optimization over initial budgets, budget-tracked policy
//!   execution, and off-grid evaluation ([`policy`]),
//! - empirical and exact CVaR estimation plus experiment sweeps ([`evaluation`]),
//! - a stochastic gridworld benchmark and a risk-neutral oracle ([`mdp`], [`crater`]).
//!
//! Every runnable capability has a corresponding program under `examples/`;
//! a thin `cvar-mdp` binary drives the same code paths from JSON configs.

pub mod bellman;
pub mod budget;
pub mod cli;
pub mod config;
pub mod crater;
pub mod evaluation;
pub mod mdp;
pub mod policy;
pub mod q_learning;
pub mod value_iteration;

mod error;

pub use bellman::{DiscretizedBellman, QTable, ValueTable};
pub use budget::{bauerle_reward, transformed_reward, BudgetGrid, RoundingMode};
pub use crater::{build_crater_walk, CraterWalkConfig};
pub use error::{Error, Result};
pub use mdp::TabularMdp;
pub use policy::{greedy_policy, outer_optimize, BudgetTracker, OuterSolution, PolicyMap, RolloutRecord};
pub use value_iteration::{solve, SolveOptions, SolveReport};
