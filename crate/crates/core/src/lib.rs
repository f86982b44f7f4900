//! Learning local navigation planners from hallucinated obstacle geometry.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`datagen`] drives a simulated differential-drive robot with a random
//!    policy in free space and logs its trajectory.
//! 2. [`halluc`] turns every recorded plan window into synthetic LiDAR scans of
//!    worlds in which that plan would have been optimal.
//! 3. [`learn`] fits a multilayer perceptron from (scan, local goal, velocity)
//!    to the recorded command.
//! 4. [`nav`] deploys learned and classical planners in cluttered worlds, and
//!    [`bench`] generates those worlds and aggregates the results.

pub mod bench;
pub mod datagen;
pub mod error;
pub mod geom;
pub mod halluc;
pub mod learn;
pub mod nav;
pub mod sim;

pub use error::{Error, Result};
