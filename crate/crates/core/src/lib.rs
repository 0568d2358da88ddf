pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod nn;
pub mod patch;
pub mod pipeline;
pub mod schedule;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
