//! Command-line front end: configuration files, presets and the
//! `datagen`, `train`, `render`, `eval` and `gradcheck` subcommands.

pub mod commands;
pub mod config;
