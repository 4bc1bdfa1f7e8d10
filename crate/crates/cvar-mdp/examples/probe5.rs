use cvar_mdp::budget::{BudgetGrid, RoundingMode};
use cvar_mdp::crater::{build_crater_walk, CraterWalkConfig};
use cvar_mdp::policy::outer_optimize;
use cvar_mdp::value_iteration::{solve_pair, SolveOptions};

fn main() {
    let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
    let options = SolveOptions::default();
    let mut value_gaps = Vec::new();
    let mut psi_gaps = Vec::new();
    for bins in [101usize, 201, 401] {
        let grid = BudgetGrid::from_bins(mdp.r_gamma(), bins).unwrap();
        let (l, u) = solve_pair(&mdp, &grid, &options).unwrap();
        let vl = l.q_star.greedy_values();
        let vu = u.q_star.greedy_values();
        let s0 = mdp.initial_state;
        let gap = (0..grid.n_points())
            .map(|zi| vu.get(s0, zi) - vl.get(s0, zi))
            .fold(f64::NEG_INFINITY, f64::max);
        value_gaps.push(gap);
        let pl = outer_optimize(&l.q_star, RoundingMode::Lower, 0.1, s0).unwrap().psi_hat;
        let pu = outer_optimize(&u.q_star, RoundingMode::Upper, 0.1, s0).unwrap().psi_hat;
        psi_gaps.push(pu - pl);
    }
    println!(
        "value gap at start state: {:.3} {:.3} {:.3} ratios {:.3} {:.3}",
        value_gaps[0], value_gaps[1], value_gaps[2],
        value_gaps[0] / value_gaps[1], value_gaps[1] / value_gaps[2]
    );
    println!(
        "psi gap (alpha 0.1):      {:.3} {:.3} {:.3} ratios {:.3} {:.3}",
        psi_gaps[0], psi_gaps[1], psi_gaps[2],
        psi_gaps[0] / psi_gaps[1], psi_gaps[1] / psi_gaps[2]
    );
}
