//! Dense-array primitives and patch geometry.
//!
//! Everything here is a pure function over immutable inputs; no shared
//! mutable state, safe to call from any number of threads.

mod image;
pub(crate) mod ops;
mod tensor;

pub use image::{BoundingBox, Image};
pub use ops::{crop_padded, resize_bilinear, xcorr_valid, ScoreGrid};
pub use tensor::Tensor3;
