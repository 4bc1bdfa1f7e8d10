//! Batch command runners behind the `cvar-mdp` binary.
//!
//! Each command takes a parsed [`RunConfig`] and writes its artifacts under
//! an output directory. Outputs are deterministic given the config and seed
//! list; only wall-time fields in solve reports differ across runs.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bellman::QTableFile;
use crate::budget::RoundingMode;
use crate::config::{RunConfig, SolverConfig};
use crate::evaluation::{alpha_sweep, write_sweep_csv, SweepSettings};
use crate::q_learning::{learn, write_trace_csv, ExplorationSchedule, LearnOptions, StepSizeSchedule};
use crate::value_iteration::{solve_pair, solve_with_progress, SolveOptions};
use crate::{Error, Result};

/// Exit code mapping: 0 success, 2 config error, 3 non-convergence,
/// 4 artifact mismatch, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::InvalidInput(_) => 2,
        Error::NonConvergence { .. } => 3,
        Error::ArtifactMismatch(_) => 4,
        _ => 1,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn table_path(out_dir: &Path, mode: RoundingMode) -> PathBuf {
    out_dir.join(format!("q_table_{mode}.json"))
}

/// Solve with value iteration per configured mode; writes one Q-table file
/// and one report per mode.
pub fn cmd_solve(config: &RunConfig, base_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let vi = match &config.solver {
        SolverConfig::Vi(vi) => vi.clone(),
        SolverConfig::Qlearn(_) => {
            return Err(Error::Config("solve requires a vi solver block".to_string()))
        }
    };
    let mdp = config.environment.build(base_dir)?;
    let grid = config.grid.build(mdp.r_gamma())?;
    ensure_dir(out_dir)?;
    let options = SolveOptions {
        tolerance: vi.epsilon,
        max_iters: vi.max_iters,
        progress_every: 25,
    };
    let modes = config.mode.modes();
    // Both modes solve in lockstep so the written tables are elementwise
    // ordered; a single mode solves on its own.
    let reports = if modes.len() == 2 {
        let (lower, upper) = solve_pair(&mdp, &grid, &options)?;
        vec![lower, upper]
    } else {
        let mode = modes[0];
        vec![solve_with_progress(&mdp, &grid, mode, &options, |iteration, delta| {
            log::info!("{mode} sweep {iteration}: delta {delta:.3e}");
        })?]
    };
    let mut written = Vec::new();
    for report in reports {
        let mode = report.mode;
        let table_file = table_path(out_dir, mode);
        report.q_star.write_json(&table_file, mode, mdp.gamma, mdp.hash64())?;
        let report_file = out_dir.join(format!("report_{mode}.json"));
        let file = std::fs::File::create(&report_file)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report.summary(mdp.hash64()))?;
        written.push(table_file);
        written.push(report_file);
    }
    Ok(written)
}

/// Train Q-learning once per seed; per-seed subdirectories hold the learned
/// table and the training trace. A reference table enables the error column.
pub fn cmd_learn(
    config: &RunConfig,
    base_dir: &Path,
    out_dir: &Path,
    reference: Option<&Path>,
    seed_offset: u64,
) -> Result<Vec<PathBuf>> {
    let qc = match &config.solver {
        SolverConfig::Qlearn(qc) => qc.clone(),
        SolverConfig::Vi(_) => {
            return Err(Error::Config("learn requires a qlearn solver block".to_string()))
        }
    };
    let mdp = config.environment.build(base_dir)?;
    let grid = config.grid.build(mdp.r_gamma())?;
    let reference_table = match reference {
        Some(path) => {
            let file = QTableFile::read_json(path)?;
            if file.mdp_hash != mdp.hash64() {
                return Err(Error::ArtifactMismatch(format!(
                    "reference table {} was solved on a different environment",
                    path.display()
                )));
            }
            Some(file.into_table())
        }
        None => None,
    };
    let reset_states = config.environment.crater_config().map(|c| c.safe_cells());
    ensure_dir(out_dir)?;

    let results: Vec<Result<Vec<PathBuf>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let seed = seed + seed_offset;
            let seed_dir = out_dir.join(format!("seed_{seed}"));
            ensure_dir(&seed_dir)?;
            let mut written = Vec::new();
            for mode in config.mode.modes() {
                let options = LearnOptions {
                    episodes: qc.episodes,
                    step_cap: qc.step_cap,
                    step_sizes: StepSizeSchedule {
                        kappa: qc.kappa,
                        kappa_min: qc.kappa_min,
                        lambda: qc.lambda,
                    },
                    exploration: ExplorationSchedule {
                        eps_start: qc.eps_start,
                        eps_end: qc.eps_end,
                        decay_steps: qc.decay_steps,
                    },
                    reset_states: reset_states.clone(),
                    checkpoint_every: qc.checkpoint_every,
                    seed,
                };
                let result = learn(&mdp, &grid, mode, &options, reference_table.as_ref())?;
                let table_file = table_path(&seed_dir, mode);
                result.q.write_json(&table_file, mode, mdp.gamma, mdp.hash64())?;
                let trace_file = seed_dir.join(format!("trace_{mode}.csv"));
                write_trace_csv(&trace_file, &result.trace)?;
                log::info!(
                    "seed {seed} {mode}: {} steps over {} episodes",
                    result.total_steps,
                    result.episodes
                );
                written.push(table_file);
                written.push(trace_file);
            }
            Ok(written)
        })
        .collect();

    let mut written = Vec::new();
    for r in results {
        written.extend(r?);
    }
    Ok(written)
}

/// Outer optimization plus rollouts for every configured risk level, using a
/// previously solved or learned table. The table must match the environment.
pub fn cmd_evaluate(
    config: &RunConfig,
    base_dir: &Path,
    table: &Path,
    out_dir: &Path,
) -> Result<PathBuf> {
    let mdp = config.environment.build(base_dir)?;
    let file = QTableFile::read_json(table)?;
    if file.mdp_hash != mdp.hash64() {
        return Err(Error::ArtifactMismatch(format!(
            "table {} was produced on a different environment",
            table.display()
        )));
    }
    if file.n_states != mdp.n_states || file.n_actions != mdp.n_actions {
        return Err(Error::ArtifactMismatch("table shape does not match environment".to_string()));
    }
    let mode = file.mode;
    let q = file.into_table();
    let settings = SweepSettings {
        alphas: config.evaluation.alphas.clone(),
        n_rollouts: config.evaluation.n_rollouts,
        step_cap: config.evaluation.step_cap,
        crater_reward_threshold: crater_threshold(config, &mdp),
        seed: config.seeds[0],
    };
    let rows = alpha_sweep(&mdp, &q, mode, None, &settings)?;
    ensure_dir(out_dir)?;
    let csv = out_dir.join("sweep.csv");
    write_sweep_csv(&csv, &rows)?;
    Ok(csv)
}

fn crater_threshold(config: &RunConfig, mdp: &crate::mdp::TabularMdp) -> f64 {
    match config.environment.crater_config() {
        Some(c) => c.crater_penalty,
        // Generic environments: count steps paying the worst penalty.
        None => mdp
            .reward
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min),
    }
}

/// Solve both bounding operators at every configured resolution and emit the
/// per-alpha bound values.
pub fn cmd_compare_bounds(config: &RunConfig, base_dir: &Path, out_dir: &Path) -> Result<PathBuf> {
    let epsilon = match &config.solver {
        SolverConfig::Vi(vi) => vi.epsilon,
        SolverConfig::Qlearn(_) => 1e-4,
    };
    let mdp = config.environment.build(base_dir)?;
    ensure_dir(out_dir)?;
    let csv_path = out_dir.join("bounds.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(out, "bins,delta,alpha,psi_lower,psi_upper,gap")?;
    for &bins in &config.compare_bins {
        let grid = config.grid.build_with_bins(mdp.r_gamma(), bins)?;
        let options = SolveOptions {
            tolerance: epsilon,
            ..SolveOptions::default()
        };
        let (lower, upper) = solve_pair(&mdp, &grid, &options)?;
        for &alpha in &config.evaluation.alphas {
            let psi_l =
                crate::policy::outer_optimize(&lower.q_star, RoundingMode::Lower, alpha, mdp.initial_state)?
                    .psi_hat;
            let psi_u =
                crate::policy::outer_optimize(&upper.q_star, RoundingMode::Upper, alpha, mdp.initial_state)?
                    .psi_hat;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                grid.n_points(),
                grid.delta(),
                alpha,
                psi_l,
                psi_u,
                psi_u - psi_l
            )?;
        }
        log::info!("compared bounds at {} points", grid.n_points());
    }
    drop(out);
    Ok(csv_path)
}
