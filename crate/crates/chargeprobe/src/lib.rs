//! Ground-state preparation, noisy measurement with error cancellation, and
//! central-charge extraction for critical spin chains.

pub mod cft;
pub mod circuit;
pub mod entropy;
pub mod error;
pub mod krylov;
pub mod lattice;
pub mod noise;
pub mod optim;
pub mod pipeline;
pub mod postprocess;
pub mod table;
pub mod vqe;

pub use error::{Error, Result};
