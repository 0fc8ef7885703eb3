pub mod audio;
pub mod digest;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
