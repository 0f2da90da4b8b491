//! Linear algebra, random streams and samplers shared by the other modules.

mod matrix;
mod rng;

pub use matrix::{kron, log2_det_hpd, unvec, vec, ComplexMatrix};
pub use rng::{mix64, stream_id, RngStream, StreamRole};

pub use num_complex::Complex64;
