//! Comment-dump ingestion and monthly snapshot filtering.
//!
//! [`parse_dump`] decodes a zstd/gzip line-delimited dump into
//! [`CommentRecord`]s; [`build_snapshot`] applies the subreddit, author and
//! activity filters and folds the survivors into per-user contexts.

mod format;
mod parse;
mod snapshot;

pub use parse::{parse_dump, parse_dump_path, parse_dump_with, parse_line, BodyState, CommentRecord, ParseTally, ParsedDump, DELETED_AUTHOR};
pub use snapshot::{
    build_snapshot, percentile_cutoff, DroppedCounts, FilterConfig, SnapshotCorpus, SnapshotStats, UserContext,
    PROFILE_PREFIX,
};
