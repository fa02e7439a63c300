//! Monthly snapshot community embeddings.
//!
//! The crate turns one month of forum comments into a [`ingest::SnapshotCorpus`],
//! trains skip-gram-with-negative-sampling vectors over user contexts
//! ([`embed`]), tunes them on subreddit analogies ([`analogy`]), clusters the
//! normalized vectors ([`cluster`]), and scores the result with intrinsic,
//! partition-comparison and annotation statistics ([`metrics`], [`intruder`]).
//! Cross-month analyses live in [`temporal`].
//!
//! Data-parallel kernels take an [`Exec`] argument. With the default
//! `parallel` feature they run on the rayon pool; without it every kernel
//! falls back to a sequential loop with identical results.

pub mod analogy;
pub mod cluster;
pub mod embed;
mod error;
mod exec;
pub mod ingest;
pub mod intruder;
pub mod layout;
pub mod metrics;
mod month;
pub mod synthetic;
pub mod temporal;

pub use error::{Error, Result};
pub use exec::Exec;
pub use month::MonthId;
