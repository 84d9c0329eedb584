//! Media mix modeling: adstock and saturation transforms, constrained ridge
//! regression, multi-objective hyperparameter search, candidate selection,
//! budget allocation and reporting.

pub mod allocator;
pub mod cluster;
pub mod dataset;
pub mod decomposition;
mod error;
pub mod evaluation;
pub mod hyper;
pub mod model;
pub mod pareto;
pub mod refresh;
pub mod regression;
pub mod reporting;
pub mod search;
pub mod simulator;
pub mod transforms;

pub use error::{Error, Result};
