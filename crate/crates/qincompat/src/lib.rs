pub mod compat;
pub mod config;
pub mod error;
pub mod feasibility;
pub mod games;
pub mod qobjects;
pub mod tensor;

pub use error::Error;
