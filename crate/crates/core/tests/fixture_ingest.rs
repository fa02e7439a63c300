use std::path::PathBuf;

use commap::ingest::{build_snapshot, parse_dump_path, parse_dump_with, FilterConfig, SnapshotCorpus};
use commap::{Exec, MonthId};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/RC_2022-03.jsonl.gz")
}

fn config() -> FilterConfig {
    FilterConfig {
        month: "2022-03".parse().unwrap(),
        top_n_subreddits: 16,
        activity_percentile: 0.95,
    }
}

#[test]
fn parse_tally_matches_fixture() {
    let dump = parse_dump_path(&fixture(), config().month).unwrap();
    assert_eq!(dump.tally.lines, 5074);
    assert_eq!(dump.tally.malformed, 1);
    assert_eq!(dump.tally.out_of_month, 2);
    assert_eq!(dump.tally.records, 5071);
    assert_eq!(dump.records.len(), 5071);
}

#[test]
fn snapshot_drop_counts() {
    let dump = parse_dump_path(&fixture(), config().month).unwrap();
    let corpus = build_snapshot(&dump.records, &config()).unwrap();
    let s = corpus.stats();
    assert_eq!(s.raw_records, 5071);
    assert_eq!(s.dropped.profile_page, 3);
    assert_eq!(s.dropped.not_top_subreddit, 3);
    assert_eq!(s.dropped.deleted_author, 5);
    assert_eq!(s.dropped.deleted_or_removed, 3);
    assert_eq!(s.dropped.single_comment_user, 7);
    assert_eq!(s.percentile_cutoff, Some(95));
    assert_eq!(s.users_above_percentile, 5);
    assert_eq!(s.dropped.above_percentile, 96 + 97 + 98 + 99 + 100);
    assert_eq!(s.users_short_context, 1);
    assert_eq!(s.dropped.short_context, 1);
    assert_eq!(s.unique_users, 94);
    assert_eq!(s.total_comments, 5050 - 1 - 490);
    assert_eq!(corpus.vocab().len(), 16);
    assert!(corpus.vocab_names().all(|n| n != "tinysub" && !n.starts_with("u_")));
    assert_eq!(corpus.contexts().first().unwrap().user, "user002");
    assert_eq!(corpus.contexts().last().unwrap().user, "user095");
}

#[test]
fn snapshot_is_byte_identical_across_runs_and_strategies() {
    let month: MonthId = config().month;
    let run = |exec| {
        let file = std::fs::File::open(fixture()).unwrap();
        let dump = parse_dump_with(file, month, exec).unwrap();
        let corpus = build_snapshot(&dump.records, &config()).unwrap();
        let mut bytes = corpus.encode_contexts();
        bytes.extend(serde_json::to_vec(corpus.vocab()).unwrap());
        bytes.extend(serde_json::to_vec(corpus.stats()).unwrap());
        bytes
    };
    let first = run(Exec::Parallel);
    assert_eq!(first, run(Exec::Parallel));
    assert_eq!(first, run(Exec::Sequential));
}

#[test]
fn written_snapshot_round_trips() {
    let dump = parse_dump_path(&fixture(), config().month).unwrap();
    let corpus = build_snapshot(&dump.records, &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_dir(dir.path()).unwrap();
    let back = SnapshotCorpus::read_dir(dir.path()).unwrap();
    assert_eq!(back.vocab(), corpus.vocab());
    assert_eq!(back.contexts(), corpus.contexts());
    assert_eq!(back.stats(), corpus.stats());
}
