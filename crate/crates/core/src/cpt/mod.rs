//! CPT values of real-valued random variables.
//!
//! A [`CptSpec`] bundles the reference point and utility with the gain and
//! loss probability distortions. Values are computed exactly for finitely
//! supported laws ([`cpt_value_exact`]) and from samples via order
//! statistics ([`cpt_value_empirical`]).

mod dist;
mod utility;
mod value;
mod weight;

pub use dist::{DiscreteDist, MERGE_TOL};
pub use utility::{CustomUtility, UtilityKind, UtilitySpec};
pub(crate) use value::tail_steps;
pub use value::{cpt_value_empirical, cpt_value_exact, make_distortion_risk_measure, CptSpec};
pub use weight::{eval_weight_derivative, PiecewiseAffine, WeightPreset, WeightSpec};
