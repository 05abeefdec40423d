//! Numerical laboratory for analog compression over subshifts of `[0,1]^Z`.
//!
//! The crate computes covering numbers and mean dimensions of subshifts,
//! block rate-distortion functions of shift-invariant measures, and builds
//! compressor/decompressor pairs with certified Hölder decoders. The
//! [`harness`] module wires these together into configuration-driven
//! verification runs.

pub mod error;
pub mod geometry;
pub mod subshifts;
pub mod dimensions;
pub mod ratedistortion;
pub mod codec;
pub mod harness;

pub use error::{Error, Result};
