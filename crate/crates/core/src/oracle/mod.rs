//! Exact computations on small finite MDPs.
//!
//! Return laws come from trajectory enumeration or from forward
//! propagation over `(state, partial return)`; CPT values and policy
//! gradients follow exactly. Expected-utility problems are solved by
//! backward induction on the MDP unwound over partial returns, and small
//! policy families are searched exhaustively on a grid.

mod enumerate;
mod grid;
mod unwind;

pub use enumerate::{
    enumerate_return_distribution, exact_cpt, exact_policy_gradient, for_each_trajectory,
    propagate_return_distribution, return_distribution, DEFAULT_CAP,
};
pub use grid::{grid_search_policy, two_action_mix, GridSearchResult, PolicyGridSpec, MAX_GRID_AXES};
pub use unwind::{
    evaluate_augmented_policy, solve_eut_dp, unwind_mdp, AugState, AugTransition, AugmentedPolicy, EutSolution,
    UnwoundMdp, STATE_CAP,
};
