pub mod error;
pub mod io;

pub use error::{Error, Result};
pub mod config;
pub mod pipeline;
pub mod synth;
