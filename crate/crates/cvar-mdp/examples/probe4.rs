use cvar_mdp::budget::{BudgetGrid, RoundingMode};
use cvar_mdp::crater::{build_crater_walk, CraterWalkConfig};
use cvar_mdp::policy::outer_optimize;
use cvar_mdp::value_iteration::{solve_pair, SolveOptions};

fn main() {
    let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
    let options = SolveOptions::default();
    // criterion 3 regime
    let mut gaps = Vec::new();
    for bins in [101usize, 201, 401] {
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), bins).unwrap();
        let (l, u) = solve_pair(&mdp, &grid, &options).unwrap();
        let gap = l.q_star.sup_dist(&u.q_star);
        let bound = 2.0 * mdp.gamma * grid.delta() / (1.0 - mdp.gamma)
            + 2.0 * mdp.gamma * options.tolerance / (1.0 - mdp.gamma);
        println!("bins {bins}: table gap {gap:.4} (bound {bound:.4})");
        gaps.push(gap);
    }
    println!("shrink factors {:.3} {:.3}", gaps[0] / gaps[1], gaps[1] / gaps[2]);
    // criterion 11 regime
    let mut prev = f64::INFINITY;
    for bins in [101usize, 501, 1001, 5001] {
        let t0 = std::time::Instant::now();
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), bins).unwrap();
        let (l, u) = solve_pair(&mdp, &grid, &options).unwrap();
        let pl = outer_optimize(&l.q_star, RoundingMode::Lower, 0.1, mdp.initial_state).unwrap().psi_hat;
        let pu = outer_optimize(&u.q_star, RoundingMode::Upper, 0.1, mdp.initial_state).unwrap().psi_hat;
        let gap = pu - pl;
        let fine_bound = 2.0 * (mdp.gamma * grid.delta() / (1.0 - mdp.gamma)) / 0.1;
        println!("bins {bins}: psi gap {gap:.4} (strictly less than prev: {}) bound at this delta {fine_bound:.3} [{:?}]", gap < prev, t0.elapsed());
        prev = gap;
    }
}
