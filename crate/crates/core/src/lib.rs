//! Kinematic trajectory optimization for in-grasp manipulation.
//!
//! A grasped object is moved by planning joint trajectories for a
//! multi-finger hand. The object is assumed rigidly attached to the thumb,
//! while the other grasping fingers are held to their initial arrangement by
//! soft relative position and orientation costs. See [`planner::plan`] for
//! the entry point, [`simulator::simulate`] for execution under disturbance
//! and [`feedback`] for the thumb correction loop.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costs;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod fixtures;
pub mod geometry;
pub mod gradcheck;
pub mod kinematics;
pub mod optimizer;
pub mod planner;
pub mod pose;
pub mod simulator;

pub use error::{Error, Result};
