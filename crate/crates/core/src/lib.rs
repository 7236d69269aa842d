#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod controllers;
pub mod error;
pub mod harness;
pub mod plant;
pub mod polytope;
pub mod solvers;
pub mod synthesis;
pub mod trajectories;

pub use error::{Error, Result};
