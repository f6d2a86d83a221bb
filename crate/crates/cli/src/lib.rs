//! Command-line front end: run configs, parameter sweeps, refits, self-checks.

pub mod acceptance;
pub mod config;
pub mod fit;
pub mod runner;
pub mod sweep;
pub mod verify;
