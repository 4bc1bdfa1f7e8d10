use cvar_mdp::budget::{BudgetGrid, RoundingMode};
use cvar_mdp::crater::{build_crater_walk, CraterWalkConfig};
use cvar_mdp::evaluation::{alpha_sweep, SweepSettings};
use cvar_mdp::mdp::risk_neutral_value_iteration;
use cvar_mdp::policy::{greedy_policy, outer_optimize};
use cvar_mdp::value_iteration::{solve_pair, SolveOptions};

fn main() {
    let config = CraterWalkConfig::default();
    let mdp = build_crater_walk(&config).unwrap();
    let grid = BudgetGrid::from_bins(mdp.r_gamma(), 201).unwrap();
    let options = SolveOptions::default();
    let t0 = std::time::Instant::now();
    let (lower, upper) = solve_pair(&mdp, &grid, &options).unwrap();
    println!(
        "solved 201 pts in {:?} ({} iterations, delta {:.2e})",
        t0.elapsed(),
        lower.iterations,
        lower.final_delta
    );
    let neutral = risk_neutral_value_iteration(&mdp, 1e-10);
    println!("risk neutral v(S) = {:.4}", neutral[mdp.initial_state]);

    let policy = greedy_policy(&lower.q_star);
    for alpha in [0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0] {
        let o = outer_optimize(&lower.q_star, RoundingMode::Lower, alpha, mdp.initial_state).unwrap();
        let ou = outer_optimize(&upper.q_star, RoundingMode::Upper, alpha, mdp.initial_state).unwrap();
        let first_action = policy.action(mdp.initial_state, o.z_index);
        println!(
            "alpha {alpha:<5} z* {:>8.2} psi_l {:>9.4} psi_u {:>9.4} gap {:>7.4} first_action {first_action}",
            o.z_star, o.psi_hat, ou.psi_hat, ou.psi_hat - o.psi_hat
        );
    }

    let settings = SweepSettings {
        alphas: vec![0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0],
        n_rollouts: 4000,
        seed: 7,
        ..SweepSettings::default()
    };
    let t1 = std::time::Instant::now();
    let rows = alpha_sweep(
        &mdp,
        &lower.q_star,
        RoundingMode::Lower,
        Some((&upper.q_star, RoundingMode::Upper)),
        &settings,
    )
    .unwrap();
    println!("sweep took {:?}", t1.elapsed());
    for row in rows {
        println!(
            "alpha {:<5} z* {:>8.2} cvar {:>9.4} mean {:>9.4} craters {:>7.4}",
            row.alpha, row.z_star, row.cvar_empirical, row.mean_return, row.crater_entries_mean
        );
    }
}
