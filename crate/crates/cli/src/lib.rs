//! Command-line front end for `spectral_shrinkage`: the `MTS1` trial file
//! format, run configuration files, CSV output and the `specshrink`
//! subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod format;
pub mod output;
