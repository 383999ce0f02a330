// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod acceptance;
pub mod config;
pub mod effpot;
pub mod error;
pub mod fiber;
pub mod fock;
pub mod fourier;
pub mod kinetic;
pub mod levy;
pub mod linalg;
pub mod model;
pub mod spectral;
pub mod stability;

pub use error::{LabError, Result};
