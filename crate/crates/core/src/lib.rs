//! Hierarchical block-family construction with correlation and Bernstein
//! tests, its parameter schedule, and empirical checks on the result.

pub mod artifact;
pub mod config;
pub mod error;
pub mod hierarchy;
pub mod lab;
pub mod pipeline;
pub mod report;
pub mod schedule;
pub mod sequence;
pub mod symbolic;

mod bits;

pub use error::{ForgeError, Result};
