pub mod error;
pub mod eval;
pub mod io;
pub mod learner;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod topology;

pub use error::{Error, Result};
