//! Second Rényi entropy growth of a thermofield-double pair of SYK models
//! under Markovian single-Majorana dissipation.

pub mod compare;
pub mod contour;
pub mod largeq;
pub mod majorana;
pub mod oracle;
pub mod error;
pub mod params;
pub mod saddle;
pub mod trajectory;

pub use error::{Error, Result};
pub use params::ModelParams;
