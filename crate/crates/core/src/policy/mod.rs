//! The cloned learner policy, the scripted expert, and rollouts.

mod features;
pub mod kdtree;
mod model;
mod oracle;
mod rollout;

pub use features::FeatureLayout;
pub use model::{FitConfig, FitError, ModelData, PolicyModel, TrainingRow, WeightsMode, DISTANCE_FLOOR};
pub use oracle::OracleExpert;
pub use rollout::{criterion_fired, rollout, Controller, OracleGate, RolloutError};

#[cfg(test)]
mod tests;
