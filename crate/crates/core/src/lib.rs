pub mod ablation;
pub mod augment;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod synth;
pub mod train;

pub use error::{RecpError, Result};
