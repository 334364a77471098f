//! Command-line driver for the `qdimer` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod estimate;
pub mod manifest;
