pub mod assembly;
pub mod certify;
pub mod error;
pub mod functionals;
pub mod linalg;
pub mod mesh;
pub mod optimize;
pub mod spectra;

pub use error::{Error, Result};
