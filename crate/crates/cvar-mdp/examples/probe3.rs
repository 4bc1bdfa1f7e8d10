use cvar_mdp::budget::{BudgetGrid, RoundingMode};
use cvar_mdp::crater::{build_crater_walk, CraterWalkConfig};
use cvar_mdp::q_learning::{learn, ExplorationSchedule, LearnOptions, StepSizeSchedule};
use cvar_mdp::value_iteration::{solve, SolveOptions};
use rayon::prelude::*;

fn main() {
    let config = CraterWalkConfig::default();
    let mdp = build_crater_walk(&config).unwrap();
    let grid = BudgetGrid::from_bins(mdp.r_gamma(), 201).unwrap();
    let reference = solve(&mdp, &grid, RoundingMode::Lower, &SolveOptions::default()).unwrap().q_star;
    let initial = reference.max_abs();
    println!("initial error {initial:.3}");
    for lambda in [0.03f64, 0.05, 0.1] {
        let t0 = std::time::Instant::now();
        let results: Vec<(u64, f64, f64)> = (0..6u64).into_par_iter().map(|seed| {
            let options = LearnOptions {
                episodes: 20_000,
                step_cap: 150,
                step_sizes: StepSizeSchedule::robbins_monro(1.0, lambda),
                exploration: ExplorationSchedule { eps_start: 1.0, eps_end: 0.1, decay_steps: 200_000 },
                reset_states: Some(config.safe_cells()),
                checkpoint_every: 5000,
                seed,
            };
            let result = learn(&mdp, &grid, RoundingMode::Lower, &options, Some(&reference)).unwrap();
            let errs: Vec<f64> = result.trace.iter().map(|p| p.sup_error_vs_ref.unwrap()).collect();
            let smoothed: Vec<f64> = errs.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
            let mut worst_rise = 0.0f64;
            for w in smoothed.windows(2) { worst_rise = worst_rise.max(w[1] - w[0]); }
            (seed, *errs.last().unwrap(), worst_rise)
        }).collect();
        println!("lambda {lambda} ({:?}):", t0.elapsed());
        for (seed, fin, rise) in results {
            println!("  seed {seed}: final {:.4} ({:.3}x), worst smoothed rise {:.4} ({:.4}x initial)", fin, fin/initial, rise, rise/initial);
        }
    }
}
