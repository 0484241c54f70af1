pub mod bench;
pub mod error;
pub mod exactsim;
pub mod fluctuations;
pub mod instance;
pub mod meanfield;
pub mod ode;
pub mod schedule;

pub use error::{Error, Result};
