//! Command-line front end for the level simulator.

pub mod config;
pub mod output;
pub mod run;

/// Exit status of the `levelsim` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failed = 1,
    BadConfig = 2,
}
