//! Energy-efficient operating modes for chemiresistive sensor arrays.
//!
//! The crate trains a zoo of interpretable classifiers on sensor-array
//! readouts, admits the strongest into a committee, ranks sensors by an
//! F1-weighted rank vote, and builds a full-array "blue" mode plus reduced
//! "green" modes with energy accounting. A capability model gives the
//! analytic minimum sensor count, cross-checked by Monte Carlo simulation.

pub mod committee;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod models;
pub mod modes;
pub mod pipeline;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
pub use matrix::Matrix;
