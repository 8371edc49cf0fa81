//! Learned control-affine wrench models and regularized control allocation
//! for a small fixed-wing airframe, together with a synthetic wind-tunnel
//! plant and five-hole probe calibration.

pub mod allocator;
pub mod dynamics;
mod error;
pub mod harness;
pub mod nncore;
pub mod plant;
pub mod probe;

pub use error::{Error, Result};
