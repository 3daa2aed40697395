pub mod bellman;
pub mod error;
pub mod gauss;
pub mod quadrature;
pub mod roots;
pub mod slope;
pub mod variational;
pub mod verifier;

pub use error::{LabError, Result};
