pub mod error;
pub mod fem;
pub mod linalg;
pub mod multilevel;
pub mod saddle;
pub mod spectra;
pub mod truncation;
pub mod uzawa;

pub use error::{Error, Result};
