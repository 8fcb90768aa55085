// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod base_opt;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod grasp_transfer;
pub mod hand_refine;
pub mod harness;
pub mod io;
pub mod joint_opt;
pub mod kinematics;
pub mod optim;
pub mod spatial;
pub mod traj_align;

pub use error::{Error, Result};
pub use geometry::{Pose, Rotation, Trajectory, Vec3};
