//! Pointer-generator summarization with an attention refinement gate and
//! variance-based attention losses, built on a small reverse-mode engine.

pub mod autodiff;
pub mod data;
pub mod decoding;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
