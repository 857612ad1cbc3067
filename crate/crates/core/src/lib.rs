pub mod blockview;
pub mod bounds;
pub mod error;
pub mod extract;
pub mod harness;
pub mod kernels;
pub mod sketching;
pub mod synthgen;

pub use error::{Error, Result};
