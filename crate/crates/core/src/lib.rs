pub mod audit;
pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod highlight;
pub mod model;
pub mod rng;
pub mod segnet;
pub mod trainer;
pub mod selfsup;
pub mod videonet;

pub use error::{Error, Result};
