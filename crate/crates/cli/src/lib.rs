//! Command-line front end for `mrk-core`: file formats, figure presets and
//! the multi-trial experiment runner.

pub mod commands;
pub mod experiment;
pub mod formats;
pub mod presets;
