//! Color-mixing toolpath compiler for multi-in-one-out nozzles.

pub mod error;
pub mod field;
pub mod gcode;
pub mod mix;
pub mod ordering;
pub mod pipeline;
pub mod strata;
pub mod toolpath;
pub mod validator;

pub use error::{Error, Result};
pub use field::FieldSpec;
pub use mix::MixRatio;
