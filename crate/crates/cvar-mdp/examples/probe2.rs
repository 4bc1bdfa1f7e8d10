use cvar_mdp::budget::{BudgetGrid, RoundingMode};
use cvar_mdp::crater::{build_crater_walk, CraterWalkConfig};
use cvar_mdp::policy::{greedy_policy, outer_optimize, rollout_batch};
use cvar_mdp::value_iteration::{solve_pair, SolveOptions};

fn main() {
    let config = CraterWalkConfig::default();
    let mdp = build_crater_walk(&config).unwrap();
    for bins in [1001usize, 2001, 5001] {
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), bins).unwrap();
        let t0 = std::time::Instant::now();
        let (lower, upper) = solve_pair(&mdp, &grid, &SolveOptions::default()).unwrap();
        let policy = greedy_policy(&lower.q_star);
        println!("bins {bins} solved in {:?} ({} iters)", t0.elapsed(), lower.iterations);
        for alpha in [0.05, 0.1, 0.3, 1.0] {
            let o = outer_optimize(&lower.q_star, RoundingMode::Lower, alpha, mdp.initial_state).unwrap();
            let ou = outer_optimize(&upper.q_star, RoundingMode::Upper, alpha, mdp.initial_state).unwrap();
            let a0 = policy.action(mdp.initial_state, o.z_index);
            let records = rollout_batch(&mdp, &policy, &grid, RoundingMode::Lower, mdp.initial_state, o.z_index, 2000, 150, 5);
            let mean: f64 = records.iter().map(|r| r.ret).sum::<f64>() / records.len() as f64;
            let goal_rate = records.iter().filter(|r| mdp.is_absorbing(*r.states.last().unwrap())).count() as f64 / records.len() as f64;
            println!("  alpha {alpha:<5} z* {:>7.2} psi_l {:>9.4} psi_u {:>9.4} gap {:>7.4} a0 {a0} mean {mean:>8.3} goal {goal_rate:.3}", o.z_star, o.psi_hat, ou.psi_hat, ou.psi_hat - o.psi_hat);
        }
    }
}
