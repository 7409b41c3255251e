//! Batch front end: benchmark generation, the exact claim suite, multi-seed
//! training runs and report merging.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod generate;
pub mod report;
pub mod roundtrip;
pub mod verify;
