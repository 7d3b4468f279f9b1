//! Freestyle swim analysis from pose landmark sequences: arm angles, stroke
//! symmetry, stroke duration and lane-marker velocity.

pub mod kinematics;
pub mod landmarks;
pub mod metrics;
pub mod preprocess;
pub mod report;
pub mod sim;
pub mod velocity;
