//! Standard-library side of the interventional data generator: dataset and
//! model files, multi-threaded generation and evaluation, experiments, and
//! the teleoperation server.

pub mod evalbench;
pub mod parallel;
pub mod store;
pub mod teleop;

pub use ivgen_core as core;
