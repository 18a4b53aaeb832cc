//! Doppler field domain types, the wrapping forward model and display resampling.

mod frame;
mod grid;
mod scan;
mod wrapping;

pub use frame::{DopplerFrame, LabelMap};
pub use grid::PolarGrid;
pub use scan::{scan_convert, scan_convert_nearest, ScanGeometry};
pub use wrapping::{
    compress_power, make_model_input, nyquist_number, nyquist_number_scalar, unwrap_with_labels,
    wrap, wrap_scalar,
};
