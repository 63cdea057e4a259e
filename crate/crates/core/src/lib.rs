pub mod acm;
pub mod error;
pub mod features;
pub mod learn;
pub mod matfun;
pub mod siegel;
pub mod signal;
pub mod spd;
pub mod verblunsky;

pub use error::{Error, Result};
