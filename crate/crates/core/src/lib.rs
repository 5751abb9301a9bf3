//! Local and global solvers for graph diffusion equations.

pub mod diffusion;
pub mod dynamic;
pub mod error;
pub mod global;
pub mod graph;
pub mod local;
pub mod metrics;
pub mod solver;

pub use error::{Error, Result};
