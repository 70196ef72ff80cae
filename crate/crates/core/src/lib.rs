//! Finite-horizon generalised regret optimal controller synthesis for
//! linear time-varying systems, with energy-bounded and pointwise
//! ellipsoidal disturbances and robust polytopic state/input constraints.

// Links the system OpenBLAS used by the PSD cone of the conic backend.
extern crate openblas_src;

pub mod cli;
pub mod conic;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod sim;
pub mod slp;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
