//! Driver for the paramtrack node-density optimizer: config files, presets,
//! artifact export and the `check`, `quality` and `generate` commands.

pub mod commands;
pub mod config;
pub mod generate;
pub mod pipeline;
