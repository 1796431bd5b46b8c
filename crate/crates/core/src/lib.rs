//! Desk-scale laboratory for hierarchical image-goal navigation.
//!
//! Numeric code in [`reward`], [`metrics`] and [`policy`] is generic over
//! [`scalar::Scalar`] (`f32` or `f64`). Geometry in [`env`] and [`hier`] and
//! the text processing in [`annot`] are `f64`/integer only.

pub mod annot;
pub mod env;
pub mod hier;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod scalar;

/// Reward arithmetic always runs in double precision.
pub type RewardConfigF64 = reward::RewardConfig<f64>;
pub type RewardBreakdownF64 = reward::RewardBreakdown<f64>;
pub type EpisodeResultF64 = metrics::EpisodeResult<f64>;
/// Training precision.
pub type PolicyNetF32 = policy::PolicyNet<f32>;
/// Gradient-check precision.
pub type PolicyNetF64 = policy::PolicyNet<f64>;
pub type TrainStateF32 = policy::TrainState<f32>;
