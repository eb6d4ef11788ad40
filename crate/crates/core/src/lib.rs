pub mod baselines;
pub mod criteria;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod forest;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod shap;
pub mod tree;

pub use error::{Error, Result};
