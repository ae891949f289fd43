pub mod error;
pub mod estimation;
pub mod experiment;
pub mod inference;
pub mod information;
pub mod kernels;
pub mod models;
pub mod nuisance;
pub mod observation;
pub mod specialfn;

pub use error::{Error, Result};
