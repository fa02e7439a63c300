//! Planted-partition generators for tests, benches and demos.
//!
//! Subreddits are named `b{block}_s{index}`; [`block_of`] recovers the block.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embed::EmbeddingModel;
use crate::ingest::{BodyState, CommentRecord, SnapshotCorpus};
use crate::MonthId;

#[derive(Clone, Debug)]
pub struct PlantedConfig {
    pub blocks: usize,
    pub per_block: usize,
    pub users: usize,
    /// Probability that a comment lands in the user's home block.
    pub within: f64,
    pub min_comments: usize,
    pub max_comments: usize,
}

impl PlantedConfig {
    /// 40 subreddits in 4 blocks, 2,000 users, 90% within-block.
    pub fn standard() -> Self {
        Self {
            blocks: 4,
            per_block: 10,
            users: 2000,
            within: 0.9,
            min_comments: 5,
            max_comments: 15,
        }
    }

    pub fn small() -> Self {
        Self {
            blocks: 3,
            per_block: 5,
            users: 300,
            within: 0.9,
            min_comments: 4,
            max_comments: 10,
        }
    }
}

pub fn subreddit_name(block: usize, index: usize) -> String {
    format!("b{block}_s{index:02}")
}

/// Block encoded in a generated subreddit name.
pub fn block_of(name: &str) -> Option<usize> {
    name.strip_prefix('b')?.split('_').next()?.parse().ok()
}

/// `(subreddit, block)` for the unpermuted layout.
pub fn membership(cfg: &PlantedConfig) -> Vec<(String, usize)> {
    (0..cfg.blocks)
        .flat_map(|b| (0..cfg.per_block).map(move |i| (subreddit_name(b, i), b)))
        .collect()
}

/// Moves the first `moved` subreddits of each block into the next block.
pub fn shifted_membership(cfg: &PlantedConfig, moved: usize) -> Vec<(String, usize)> {
    membership(cfg)
        .into_iter()
        .map(|(name, b)| {
            let idx: usize = name.rsplit('s').next().unwrap().parse().unwrap();
            if idx < moved {
                (name, (b + 1) % cfg.blocks)
            } else {
                (name, b)
            }
        })
        .collect()
}

/// Per-user comment bags drawn from a block membership.
pub fn planted_bags(
    cfg: &PlantedConfig,
    members: &[(String, usize)],
    seed: u64,
) -> Vec<(String, Vec<(String, u32)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_block: Vec<Vec<&str>> = vec![Vec::new(); cfg.blocks];
    for (name, b) in members {
        by_block[*b].push(name);
    }
    (0..cfg.users)
        .map(|u| {
            let home = rng.random_range(0..cfg.blocks);
            let n = rng.random_range(cfg.min_comments..=cfg.max_comments);
            let mut bag: BTreeMap<String, u32> = BTreeMap::new();
            for _ in 0..n {
                let block = if cfg.blocks == 1 || rng.random::<f64>() < cfg.within {
                    home
                } else {
                    let other = rng.random_range(0..cfg.blocks - 1);
                    if other >= home {
                        other + 1
                    } else {
                        other
                    }
                };
                let pool = &by_block[block];
                let s = pool[rng.random_range(0..pool.len())];
                *bag.entry(s.to_string()).or_default() += 1;
            }
            (format!("user{u:05}"), bag.into_iter().collect())
        })
        .collect()
}

pub fn planted_corpus(cfg: &PlantedConfig, month: MonthId, seed: u64) -> SnapshotCorpus {
    planted_corpus_from(cfg, &membership(cfg), month, seed)
}

pub fn planted_corpus_from(cfg: &PlantedConfig, members: &[(String, usize)], month: MonthId, seed: u64) -> SnapshotCorpus {
    SnapshotCorpus::from_contexts(month, planted_bags(cfg, members, seed)).expect("planted corpus is non-empty")
}

/// Raw comment records for a planted month, one per comment, timestamped
/// inside `month`.
pub fn planted_records(cfg: &PlantedConfig, members: &[(String, usize)], month: MonthId, seed: u64) -> Vec<CommentRecord> {
    let start = chrono::NaiveDate::from_ymd_opt(month.year() as i32, month.month() as u32, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
        .and_utc()
        .timestamp();
    let mut id = 0u64;
    let mut out = Vec::new();
    for (user, bag) in planted_bags(cfg, members, seed) {
        for (sub, count) in bag {
            for _ in 0..count {
                id += 1;
                out.push(CommentRecord {
                    author: user.clone(),
                    subreddit: sub.clone(),
                    created_utc: start + (id % 2_000_000) as i64,
                    body_state: BodyState::Present,
                    id: format!("t1_{id:x}"),
                });
            }
        }
    }
    out
}

/// One JSON dump line for a record.
pub fn dump_line(r: &CommentRecord) -> String {
    let body = match r.body_state {
        BodyState::Present => "text",
        BodyState::Deleted => "[deleted]",
        BodyState::Removed => "[removed]",
    };
    serde_json::json!({
        "author": r.author,
        "subreddit": r.subreddit,
        "created_utc": r.created_utc,
        "body": body,
        "id": r.id,
    })
    .to_string()
}

/// Tight Gaussian blobs around orthogonal axes, one blob per block.
/// Rows are named like planted subreddits and are not normalized.
pub fn blob_model(blocks: usize, per_block: usize, dim: usize, noise: f64, month: MonthId, seed: u64) -> EmbeddingModel {
    assert!(dim >= blocks, "need one axis per blob");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let mut names = Vec::new();
    let mut data = Vec::new();
    for b in 0..blocks {
        for i in 0..per_block {
            names.push(subreddit_name(b, i));
            for d in 0..dim {
                let base = if d == b { 1.0 } else { 0.0 };
                data.push((base + normal.sample(&mut rng)) as f32);
            }
        }
    }
    let vectors = Array2::from_shape_vec((names.len(), dim), data).unwrap();
    let params = crate::embed::TrainParams {
        dim,
        ..Default::default()
    };
    EmbeddingModel::from_parts(month, names, vectors, params, false).unwrap()
}

/// Ground-truth labels for a model's vocabulary.
pub fn truth_labels(model: &EmbeddingModel) -> Vec<usize> {
    model.vocab().iter().map(|s| block_of(s).unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        assert_eq!(block_of(&subreddit_name(3, 7)), Some(3));
        assert_eq!(block_of("aww"), None);
    }

    #[test]
    fn planted_users_stay_mostly_home() {
        let cfg = PlantedConfig::standard();
        let bags = planted_bags(&cfg, &membership(&cfg), 1);
        assert_eq!(bags.len(), 2000);
        let (mut home, mut total) = (0u32, 0u32);
        for (_, bag) in &bags {
            let mut per = vec![0u32; cfg.blocks];
            for (s, c) in bag {
                per[block_of(s).unwrap()] += c;
            }
            home += per.iter().max().unwrap();
            total += per.iter().sum::<u32>();
        }
        assert!(home as f64 / total as f64 > 0.85);
    }

    #[test]
    fn shifted_moves_prefix() {
        let cfg = PlantedConfig::standard();
        let m = shifted_membership(&cfg, 3);
        assert_eq!(m[0], ("b0_s00".to_string(), 1));
        assert_eq!(m[3], ("b0_s03".to_string(), 0));
        assert_eq!(m[30], ("b3_s00".to_string(), 0));
    }
}
