//! The environments used in the experiments.
//!
//! Magnitudes that the experiments leave open (illegal-move penalties,
//! congestion laws, terminal risk levels, horizons) are defaults documented
//! on each constructor.

use super::finite::{FiniteMdp, FiniteMdpBuilder};
use crate::error::{Error, Result};

/// Grid moves, in action-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMove {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridMove {
    pub const ALL: [GridMove; 4] = [GridMove::Up, GridMove::Down, GridMove::Left, GridMove::Right];

    /// Target cell, or `None` when the move would leave an `n × n` grid.
    fn apply(self, n: usize, row: usize, col: usize) -> Option<(usize, usize)> {
        match self {
            GridMove::Up => row.checked_sub(1).map(|r| (r, col)),
            GridMove::Down => (row + 1 < n).then_some((row + 1, col)),
            GridMove::Left => col.checked_sub(1).map(|c| (row, c)),
            GridMove::Right => (col + 1 < n).then_some((row, col + 1)),
        }
    }
}

fn built(b: FiniteMdpBuilder) -> FiniteMdp {
    b.build().expect("catalog environments are valid by construction")
}

/// Initial state 0, terminal state 1, horizon 1. Action A (0) pays 1
/// surely; action B (1) pays 0 or 3/2 with probability ½ each.
pub fn two_state_counterexample() -> FiniteMdp {
    built(
        FiniteMdpBuilder::new("two_state_counterexample", 2, 2, 1)
            .start(0)
            .terminal(1)
            .branch(0, 0, 1, 1.0, vec![(1.0, 1.0)])
            .branch(0, 1, 1, 1.0, vec![(0.0, 0.5), (1.5, 0.5)]),
    )
}

/// `s₀ → s₁` paying 1 or 0 (½ each) whatever the action; in `s₁` action A
/// (0) pays 0 or 2 (½ each), action B (1) pays 1; `s₂` is terminal. Horizon 2.
pub fn exp_counterexample() -> FiniteMdp {
    built(
        FiniteMdpBuilder::new("exp_counterexample", 3, 2, 2)
            .start(0)
            .terminal(2)
            .all_actions(0, 1, vec![(1.0, 0.5), (0.0, 0.5)])
            .branch(1, 0, 2, 1.0, vec![(0.0, 0.5), (2.0, 0.5)])
            .branch(1, 1, 2, 1.0, vec![(1.0, 1.0)]),
    )
}

/// Three states, three actions, horizon 2. The first step pays ±1 with
/// probability ½; in the second state A (0) pays 1, B (1) pays 0 or 3
/// (½ each) and C (2) pays 0.
pub fn markov_test_env() -> FiniteMdp {
    built(
        FiniteMdpBuilder::new("markov_test_env", 3, 3, 2)
            .start(0)
            .terminal(2)
            .all_actions(0, 1, vec![(1.0, 0.5), (-1.0, 0.5)])
            .branch(1, 0, 2, 1.0, vec![(1.0, 1.0)])
            .branch(1, 1, 2, 1.0, vec![(0.0, 0.5), (3.0, 0.5)])
            .branch(1, 2, 2, 1.0, vec![(0.0, 1.0)]),
    )
}

pub const UTILITY_GRID_HORIZON: usize = 12;
pub const UTILITY_GRID_ILLEGAL: f64 = -1.0;

/// 4 × 4 grid (cell `row * 4 + col`), uniform start over the top three rows.
/// Entering an empty cell pays −1 or +0.8 (½ each); entering the bottom-left
/// or bottom-right corner pays +5 or +6 and ends the episode. A move off the
/// grid leaves the agent in place and pays −1. Horizon 12.
pub fn utility_grid_env() -> FiniteMdp {
    let n = 4;
    let corner_left = (n - 1) * n;
    let corner_right = n * n - 1;
    let mut initial = vec![0.0; n * n];
    for cell in initial.iter_mut().take(3 * n) {
        *cell = 1.0 / (3 * n) as f64;
    }
    let mut b = FiniteMdpBuilder::new("utility_grid_env", n * n, 4, UTILITY_GRID_HORIZON)
        .initial(initial)
        .terminal(corner_left)
        .terminal(corner_right);
    for row in 0..n {
        for col in 0..n {
            let s = row * n + col;
            for mv in GridMove::ALL {
                let (next, rewards) = match mv.apply(n, row, col) {
                    None => (s, vec![(UTILITY_GRID_ILLEGAL, 1.0)]),
                    Some((r, c)) => {
                        let t = r * n + c;
                        let rewards = if t == corner_left {
                            vec![(5.0, 1.0)]
                        } else if t == corner_right {
                            vec![(6.0, 1.0)]
                        } else {
                            vec![(-1.0, 0.5), (0.8, 0.5)]
                        };
                        (t, rewards)
                    }
                };
                b.add_branch(s, mv as usize, next, 1.0, rewards);
            }
        }
    }
    built(b)
}

/// Mean payoff of every diagonal terminal of the scaling grid.
pub const SCALING_GRID_PAYOFF: f64 = 1.0;

/// [`scaling_grid_env_with_horizon`] with horizon `3n`.
pub fn scaling_grid_env(n: usize) -> Result<FiniteMdp> {
    scaling_grid_env_with_horizon(n, 3 * n)
}

/// `n × n` grid, `n` odd. The agent starts in the top-right cell
/// `(0, n−1)`; the diagonal cells `(k, k)` are terminal and all lie `n − 1`
/// moves away. A move pays `−1/n`, a move off the grid pays `−2/n` and
/// leaves the agent in place. Entering `(k, k)` pays `1 ± d/n` with
/// probability ½ each, where `d = |k − (n−1)/2|`: same mean everywhere,
/// deterministic at the centre, riskier towards the corners.
pub fn scaling_grid_env_with_horizon(n: usize, horizon: usize) -> Result<FiniteMdp> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::argument(format!(
            "scaling grid size must be odd and at least 3 (the centre cell must exist), got {n}"
        )));
    }
    let nf = n as f64;
    let center = (n - 1) / 2;
    let mut b = FiniteMdpBuilder::new(format!("scaling_grid_{n}"), n * n, 4, horizon).start(n - 1);
    for k in 0..n {
        b = b.terminal(k * n + k);
    }
    for row in 0..n {
        for col in 0..n {
            let s = row * n + col;
            for mv in GridMove::ALL {
                let (next, rewards) = match mv.apply(n, row, col) {
                    None => (s, vec![(-2.0 / nf, 1.0)]),
                    Some((r, c)) if r == c => {
                        let d = r.abs_diff(center) as f64 / nf;
                        let rewards = if d == 0.0 {
                            vec![(SCALING_GRID_PAYOFF, 1.0)]
                        } else {
                            vec![(SCALING_GRID_PAYOFF - d, 0.5), (SCALING_GRID_PAYOFF + d, 0.5)]
                        };
                        (r * n + c, rewards)
                    }
                    Some((r, c)) => (r * n + c, vec![(-1.0 / nf, 1.0)]),
                };
                b.add_branch(s, mv as usize, next, 1.0, rewards);
            }
        }
    }
    b.build()
}

/// Congestion law of central roads: rare large delay, otherwise fast.
pub const TRAFFIC_CENTRAL_LAW: [(f64, f64); 2] = [(-10.0, 0.05), (-0.5, 0.95)];
pub const TRAFFIC_PERIPHERAL_COST: f64 = -1.0;
pub const TRAFFIC_ILLEGAL: f64 = -2.0;

/// `n × n` road grid from the top-left corner to the bottom-right corner.
/// A road touching an interior intersection is central and follows
/// [`TRAFFIC_CENTRAL_LAW`] (mean −0.975, fat left tail); roads on the outer
/// ring cost a constant −1. A move off the grid costs −2 and stays put.
/// Horizon `4(n − 1)`.
pub fn traffic_grid_env(n: usize) -> Result<FiniteMdp> {
    if n < 3 {
        return Err(Error::argument(format!("traffic grid needs n >= 3, got {n}")));
    }
    let interior = |r: usize, c: usize| r > 0 && c > 0 && r + 1 < n && c + 1 < n;
    let goal = n * n - 1;
    let mut b = FiniteMdpBuilder::new(format!("traffic_grid_{n}"), n * n, 4, 4 * (n - 1))
        .start(0)
        .terminal(goal);
    for row in 0..n {
        for col in 0..n {
            let s = row * n + col;
            for mv in GridMove::ALL {
                let (next, rewards) = match mv.apply(n, row, col) {
                    None => (s, vec![(TRAFFIC_ILLEGAL, 1.0)]),
                    Some((r, c)) => {
                        let rewards = if interior(row, col) || interior(r, c) {
                            TRAFFIC_CENTRAL_LAW.to_vec()
                        } else {
                            vec![(TRAFFIC_PERIPHERAL_COST, 1.0)]
                        };
                        (r * n + c, rewards)
                    }
                };
                b.add_branch(s, mv as usize, next, 1.0, rewards);
            }
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;

    fn support(mdp: &FiniteMdp, s: usize, a: usize) -> Vec<f64> {
        let mut v: Vec<f64> = mdp
            .branches(s, a)
            .iter()
            .flat_map(|b| b.rewards.iter().map(|r| r.0))
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn two_state_shape() {
        let m = two_state_counterexample();
        assert_eq!(m.n_states(), 2);
        assert_eq!(m.n_actions(), 2);
        assert_eq!(support(&m, 0, 1), vec![0.0, 1.5]);
        assert_eq!(support(&m, 0, 0), vec![1.0]);
    }

    #[test]
    fn exp_counterexample_shape() {
        let m = exp_counterexample();
        assert_eq!(support(&m, 0, 0), vec![0.0, 1.0]);
        assert_eq!(support(&m, 1, 0), vec![0.0, 2.0]);
        assert_eq!(m.horizon(), 2);
    }

    #[test]
    fn markov_test_shape() {
        let m = markov_test_env();
        assert_eq!(support(&m, 0, 2), vec![-1.0, 1.0]);
        let mean_b: f64 = m.branches(1, 1)[0].rewards.iter().map(|(r, p)| r * p).sum();
        assert_eq!(mean_b, 1.5);
    }

    #[test]
    fn utility_grid_shape() {
        let m = utility_grid_env();
        assert_eq!(m.n_states(), 16);
        let mut terminal_rewards: Vec<f64> = (0..16)
            .flat_map(|s| (0..4).map(move |a| (s, a)))
            .flat_map(|(s, a)| m.branches(s, a).to_vec())
            .filter(|b| m.terminal(b.next) && b.rewards.iter().all(|r| r.0 != 0.0))
            .map(|b| b.rewards[0].0)
            .collect();
        terminal_rewards.sort_by(f64::total_cmp);
        terminal_rewards.dedup();
        assert_eq!(terminal_rewards, vec![5.0, 6.0]);
        // moving up from the top row is illegal
        assert_eq!(m.branches(1, GridMove::Up as usize)[0].next, 1);
        assert_eq!(m.branches(1, GridMove::Up as usize)[0].rewards, vec![(-1.0, 1.0)]);
        assert_eq!(m.initial().iter().filter(|&&p| p > 0.0).count(), 12);
    }

    #[test]
    fn scaling_grid_rewards() {
        let m = scaling_grid_env(5).unwrap();
        // step from the start (0,4) down to (1,4)
        assert_eq!(m.branches(4, GridMove::Down as usize)[0].rewards, vec![(-0.2, 1.0)]);
        assert_eq!(m.branches(4, GridMove::Up as usize)[0].rewards, vec![(-0.4, 1.0)]);
        // centre (2,2) entered from (1,2): deterministic
        let centre = &m.branches(7, GridMove::Down as usize)[0];
        assert_eq!(centre.next, 12);
        assert_eq!(centre.rewards, vec![(1.0, 1.0)]);
        // corner (0,0) entered from (0,1): same mean, positive variance
        let corner = &m.branches(1, GridMove::Left as usize)[0];
        let mean: f64 = corner.rewards.iter().map(|(r, p)| r * p).sum();
        assert!((mean - 1.0).abs() < 1e-12);
        assert!(corner.rewards.len() == 2);
        assert!(scaling_grid_env(4).is_err());
    }

    #[test]
    fn traffic_grid_laws() {
        let m = traffic_grid_env(3).unwrap();
        // (0,0) -> (0,1) is on the ring
        assert_eq!(m.branches(0, GridMove::Right as usize)[0].rewards, vec![(-1.0, 1.0)]);
        // (0,1) -> (1,1) touches the centre
        assert_eq!(m.branches(1, GridMove::Down as usize)[0].rewards, TRAFFIC_CENTRAL_LAW.to_vec());
        assert!(m.initial()[0] == 1.0 && m.terminal(8));
        let central_mean: f64 = TRAFFIC_CENTRAL_LAW.iter().map(|(r, p)| r * p).sum();
        assert!(central_mean > TRAFFIC_PERIPHERAL_COST);
        assert!(traffic_grid_env(2).is_err());
    }
}
