pub mod bayes;
pub mod channel;
pub mod error;
pub mod fock;
pub mod measurement;
pub mod parallel;
pub mod runner;
pub mod shannon;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
