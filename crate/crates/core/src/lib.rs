//! Desk-scale laboratory for depth separation and learnability: dense ReLU
//! networks trained by population gradient descent, exact constructions,
//! exact 1-D piecewise-linear analysis, a statistical-query simulator and
//! bounded-norm kernel hinge minimization.

pub mod audit;
pub mod constructions;
pub mod dist;
pub mod error;
pub mod init;
pub mod kernel;
pub mod net;
pub mod pwl;
pub mod seed;
pub mod sq;
pub mod train;

pub use error::{LabError, Result};
