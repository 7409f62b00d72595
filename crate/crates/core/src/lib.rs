pub mod cli;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod milp;
pub mod objective;
pub mod search;
pub mod segmentation;

pub use error::{Error, Result};
