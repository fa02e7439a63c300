//! Orchestration around the `commap` library: a declarative pipeline that
//! exports a per-month artifact tree, cross-month analyses over it, and a
//! read-only HTTP API for map clients.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod pipeline;
pub mod serve;
