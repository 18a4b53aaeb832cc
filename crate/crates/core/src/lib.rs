//! Dealiasing of 2D color Doppler velocity fields.
//!
//! The crate covers the wrapping forward model and Nyquist-number algebra
//! ([`field`]), a synthetic phantom generator ([`synth`]), training-time
//! augmentation ([`augment`]), a statistical-region-merging baseline
//! ([`srm`]), an unfolded primal-dual network with its own training stack
//! ([`pdnet`]) and the evaluation metrics and harness ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used on disk and in training.

pub mod augment;
pub mod corpus;
pub mod dff;
pub mod error;
pub mod eval;
pub mod field;
pub mod io;
pub mod pdnet;
pub mod render;
pub mod scalar;
pub mod srm;
pub mod synth;

pub use error::{Error, Result};
pub use field::{DopplerFrame, LabelMap, PolarGrid};
pub use scalar::Scalar;

/// Frame precision used by the file formats.
pub type Frame32 = field::DopplerFrame<f32>;
pub type Frame64 = field::DopplerFrame<f64>;
// Network in training precision.
pub type PdNet32 = pdnet::PdNetModel<f32>;
// Network in gradient-check precision.
pub type PdNet64 = pdnet::PdNetModel<f64>;
