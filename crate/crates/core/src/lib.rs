pub mod cli;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod losses;
pub mod optimizer;
pub mod simulation;

pub use error::{Error, Result};
