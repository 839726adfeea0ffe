//! Cumulative prospect theory (CPT) objectives for reinforcement learning.
//!
//! The crate evaluates CPT values of return distributions, trains policies
//! to maximize them with a policy gradient built on the CPT integral weight
//! and with a simultaneous-perturbation baseline, and offers exact
//! enumeration tools on small MDPs for checking both.

pub mod cpt;
pub mod env;
pub mod error;
pub mod oracle;
pub mod pg;
pub mod phi;
pub mod policy;
pub mod rng;
pub mod spsa;
pub mod study;

pub use cpt::{
    cpt_value_empirical, cpt_value_exact, eval_weight_derivative, make_distortion_risk_measure, CptSpec,
    DiscreteDist, PiecewiseAffine, UtilityKind, UtilitySpec, WeightPreset, WeightSpec,
};
pub use env::{
    sample_trajectory, Action, EnvState, Environment, FiniteMdp, FiniteMdpBuilder, Space, Step, Trajectory,
};
pub use error::{Error, Result};
pub use policy::{
    ActionDist, DiscretePolicy, Feature, HistoryAbstraction, HistoryView, PolicyParams, ProbabilityTable,
    RolloutPolicy,
};
pub use rng::SimRng;
pub use oracle::{exact_cpt, exact_policy_gradient, grid_search_policy, solve_eut_dp, unwind_mdp, PolicyGridSpec};
pub use pg::{estimate_policy_gradient, evaluate, train, PhiMethod, TrainConfig, TrainResult};
pub use phi::{phi_exact_discrete, phi_piecewise_affine, phi_quantile, PhiValue, QuantileTable};
pub use spsa::{spsa_gradient, train_spsa, SpsaConfig};
