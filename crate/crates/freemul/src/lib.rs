//! File formats, Monte Carlo laboratory and command-line front end for `freemul-core`.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod lab;
pub mod presets;

pub use error::{Error, Result};
