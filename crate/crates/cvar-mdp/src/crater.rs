//! Crater walk: a stochastic gridworld where a robot crosses uneven terrain
//! from a start cell to an absorbing goal while paying fuel penalties.
//!
//! Every step costs `step_penalty`; moving out of a crater cell costs
//! `crater_penalty` instead (the extra fuel needed to escape). All rewards
//! are non-positive, so the sign condition required by the bounding
//! operators holds by construction.

use serde::{Deserialize, Serialize};

use crate::mdp::TabularMdp;
use crate::{Error, Result};

/// Grid coordinates as `(row, col)`, row 0 at the top.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CraterWalkConfig {
    pub width: usize,
    pub height: usize,
    /// Probability mass diverted away from the intended direction.
    pub slip_probability: f64,
    pub step_penalty: f64,
    pub crater_penalty: f64,
    pub crater_cells: Vec<Cell>,
    pub start_cell: Cell,
    pub goal_cell: Cell,
    pub gamma: f64,
}

impl Default for CraterWalkConfig {
    fn default() -> Self {
        // 5x4 map with a crater above the bottom corridor: the short route
        // along the bottom row can slip into the crater, while the route
        // over the top row is longer but out of slip range everywhere.
        CraterWalkConfig {
            width: 5,
            height: 4,
            slip_probability: 0.25,
            step_penalty: -1.0,
            crater_penalty: -10.0,
            crater_cells: vec![(2, 2)],
            start_cell: (3, 0),
            goal_cell: (3, 4),
            gamma: 0.9,
        }
    }
}

/// Cardinal move directions; laterals and backward are taken relative to the
/// intended direction.
const DIRECTIONS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

pub const ACTION_UP: usize = 0;
pub const ACTION_DOWN: usize = 1;
pub const ACTION_LEFT: usize = 2;
pub const ACTION_RIGHT: usize = 3;

impl CraterWalkConfig {
    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state_of(&self, cell: Cell) -> usize {
        cell.0 * self.width + cell.1
    }

    pub fn cell_of(&self, state: usize) -> Cell {
        (state / self.width, state % self.width)
    }

    pub fn is_crater(&self, cell: Cell) -> bool {
        self.crater_cells.contains(&cell)
    }

    fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    /// Cells an agent may be reset to during training: anything that is
    /// neither a crater nor the goal.
    pub fn safe_cells(&self) -> Vec<usize> {
        (0..self.n_states())
            .filter(|&s| {
                let cell = self.cell_of(s);
                cell != self.goal_cell && !self.is_crater(cell)
            })
            .collect()
    }
}

/// Build the crater walk as a [`TabularMdp`].
///
/// The intended move succeeds with probability `1 - omega`; each lateral
/// direction receives `4 omega / 9` and the backward direction `omega / 9`.
/// Any movement component blocked by the boundary leaves the robot in place
/// with that component's probability.
pub fn build_crater_walk(config: &CraterWalkConfig) -> Result<TabularMdp> {
    let omega = config.slip_probability;
    if !(0.0..1.0).contains(&omega) {
        return Err(Error::InvalidInput(format!(
            "slip probability {omega} outside [0, 1)"
        )));
    }
    if !(0.0..1.0).contains(&config.gamma) {
        return Err(Error::InvalidInput(format!("gamma {} outside [0, 1)", config.gamma)));
    }
    if config.width == 0 || config.height == 0 {
        return Err(Error::InvalidInput("grid must be non-empty".to_string()));
    }
    if config.step_penalty > 0.0 || config.crater_penalty > 0.0 {
        return Err(Error::InvalidInput("penalties must be non-positive".to_string()));
    }
    let mut cells = vec![config.start_cell, config.goal_cell];
    cells.extend(config.crater_cells.iter().copied());
    for cell in cells {
        if cell.0 >= config.height || cell.1 >= config.width {
            return Err(Error::InvalidInput(format!("cell {cell:?} out of bounds")));
        }
    }
    if config.is_crater(config.goal_cell) {
        return Err(Error::InvalidInput("goal cell cannot be a crater".to_string()));
    }

    let n_states = config.n_states();
    let n_actions = 4;
    let goal = config.state_of(config.goal_cell);

    let mut reward = vec![vec![0.0; n_actions]; n_states];
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];

    for s in 0..n_states {
        let cell = config.cell_of(s);
        for a in 0..n_actions {
            if s == goal {
                transition[s][a][s] = 1.0;
                continue;
            }
            reward[s][a] = if config.is_crater(cell) {
                config.crater_penalty
            } else {
                config.step_penalty
            };
            // (direction, probability): intended, two laterals, backward.
            let (dr, dc) = DIRECTIONS[a];
            let components = [
                ((dr, dc), 1.0 - omega),
                ((dc, dr), 4.0 * omega / 9.0),
                ((-dc, -dr), 4.0 * omega / 9.0),
                ((-dr, -dc), omega / 9.0),
            ];
            for ((mr, mc), p) in components {
                let (nr, nc) = (cell.0 as isize + mr, cell.1 as isize + mc);
                let target = if config.in_bounds(nr, nc) {
                    config.state_of((nr as usize, nc as usize))
                } else {
                    s
                };
                transition[s][a][target] += p;
            }
        }
    }

    let mdp = TabularMdp {
        n_states,
        n_actions,
        gamma: config.gamma,
        r_max: config.step_penalty.abs().max(config.crater_penalty.abs()),
        initial_state: config.state_of(config.start_cell),
        absorbing: vec![goal],
        reward,
        transition,
    };
    mdp.check()?;
    Ok(mdp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_build_matches_return_bound() {
        let mdp = build_crater_walk(&CraterWalkConfig::default()).unwrap();
        assert_eq!(mdp.n_states, 20);
        assert_eq!(mdp.n_actions, 4);
        assert_eq!(mdp.r_max, 10.0);
        // 10 / (1 - 0.9) = 100.
        assert!((mdp.r_gamma() - 100.0).abs() < 1e-9);
        assert!(mdp.has_nonpositive_rewards());
    }

    #[test]
    fn zero_slip_is_deterministic() {
        let config = CraterWalkConfig {
            slip_probability: 0.0,
            ..CraterWalkConfig::default()
        };
        let mdp = build_crater_walk(&config).unwrap();
        let s = config.state_of((1, 1));
        let row = &mdp.transition[s][ACTION_RIGHT];
        assert_eq!(row[config.state_of((1, 2))], 1.0);
        assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 1);
    }

    #[test]
    fn rows_sum_to_one_for_any_slip() {
        for omega in [0.0, 0.1, 0.25, 0.5, 0.9, 0.999] {
            let config = CraterWalkConfig {
                slip_probability: omega,
                ..CraterWalkConfig::default()
            };
            let mdp = build_crater_walk(&config).unwrap();
            assert!(mdp.validate().is_empty(), "omega = {omega}");
        }
    }

    #[test]
    fn slip_masses_match_description() {
        let config = CraterWalkConfig::default();
        let mdp = build_crater_walk(&config).unwrap();
        // Interior cell, all four targets distinct.
        let s = config.state_of((1, 2));
        let row = &mdp.transition[s][ACTION_UP];
        let omega = config.slip_probability;
        assert!((row[config.state_of((0, 2))] - (1.0 - omega)).abs() < 1e-12);
        assert!((row[config.state_of((1, 1))] - 4.0 * omega / 9.0).abs() < 1e-12);
        assert!((row[config.state_of((1, 3))] - 4.0 * omega / 9.0).abs() < 1e-12);
        assert!((row[config.state_of((2, 2))] - omega / 9.0).abs() < 1e-12);
    }

    #[test]
    fn wall_bump_keeps_position_per_component() {
        let config = CraterWalkConfig::default();
        let mdp = build_crater_walk(&config).unwrap();
        // Top-left corner moving up: intended and one lateral are blocked.
        let s = config.state_of((0, 0));
        let row = &mdp.transition[s][ACTION_UP];
        let omega = config.slip_probability;
        let stay = 1.0 - omega + 4.0 * omega / 9.0;
        assert!((row[s] - stay).abs() < 1e-12);
    }

    #[test]
    fn goal_is_absorbing_with_zero_reward() {
        let config = CraterWalkConfig::default();
        let mdp = build_crater_walk(&config).unwrap();
        let goal = config.state_of(config.goal_cell);
        for a in 0..4 {
            assert_eq!(mdp.transition[goal][a][goal], 1.0);
            assert_eq!(mdp.reward[goal][a], 0.0);
        }
    }

    #[test]
    fn crater_exit_costs_crater_penalty() {
        let config = CraterWalkConfig::default();
        let mdp = build_crater_walk(&config).unwrap();
        let crater = config.state_of(config.crater_cells[0]);
        for a in 0..4 {
            assert_eq!(mdp.reward[crater][a], config.crater_penalty);
        }
    }

    #[test]
    fn rejects_invalid_slip() {
        for omega in [1.0, 1.5, -0.1] {
            let config = CraterWalkConfig {
                slip_probability: omega,
                ..CraterWalkConfig::default()
            };
            assert!(build_crater_walk(&config).is_err(), "omega = {omega}");
        }
    }

    #[test]
    fn safe_cells_exclude_craters_and_goal() {
        let config = CraterWalkConfig::default();
        let safe = config.safe_cells();
        assert_eq!(safe.len(), 20 - 1 - 1);
        assert!(!safe.contains(&config.state_of(config.goal_cell)));
        assert!(!safe.contains(&config.state_of((2, 2))));
    }
}
