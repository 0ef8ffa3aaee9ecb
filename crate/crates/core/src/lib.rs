//! Grid-structured 2D-to-3D human pose lifting.

pub mod data;
pub mod error;
pub mod gln;
pub mod gridconv;
pub mod metrics;
pub mod sgt;
pub mod tensor_engine;
pub mod verify;

pub use error::{Error, Result};
