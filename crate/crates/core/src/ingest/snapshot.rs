use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::parse::{BodyState, CommentRecord, DELETED_AUTHOR};
use crate::{Error, MonthId, Result};

/// Subreddit-name prefix of user profile pages.
pub const PROFILE_PREFIX: &str = "u_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub month: MonthId,
    #[serde(default = "default_top_n")]
    pub top_n_subreddits: usize,
    #[serde(default = "default_percentile")]
    pub activity_percentile: f64,
}

fn default_top_n() -> usize {
    10_000
}

fn default_percentile() -> f64 {
    0.95
}

impl FilterConfig {
    pub fn new(month: MonthId) -> Self {
        Self {
            month,
            top_n_subreddits: default_top_n(),
            activity_percentile: default_percentile(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_n_subreddits == 0 {
            return Err(Error::invalid("top_n_subreddits must be at least 1"));
        }
        if !(self.activity_percentile > 0.0 && self.activity_percentile <= 1.0) {
            return Err(Error::invalid("activity_percentile must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Records removed at each filtering step. Each record is counted once,
/// under the first rule that removed it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCounts {
    pub profile_page: u64,
    pub not_top_subreddit: u64,
    pub deleted_author: u64,
    pub deleted_or_removed: u64,
    pub single_comment_user: u64,
    pub above_percentile: u64,
    pub short_context: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub raw_records: u64,
    pub total_comments: u64,
    pub unique_users: u64,
    pub percentile_cutoff: Option<u64>,
    pub users_above_percentile: u64,
    pub users_short_context: u64,
    pub dropped: DroppedCounts,
}

/// One user's bag of (vocab index, occurrence count), sorted by index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserContext {
    pub user: String,
    pub tokens: Vec<(u32, u32)>,
}

impl UserContext {
    pub fn len(&self) -> u64 {
        self.tokens.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One month of filtered user contexts.
///
/// Vocabulary entries are sorted by name; context tokens refer to them by
/// position. Contexts are sorted by user.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotCorpus {
    pub(super) month: MonthId,
    pub(super) vocab: Vec<(String, u64)>,
    pub(super) contexts: Vec<UserContext>,
    pub(super) stats: SnapshotStats,
}

impl SnapshotCorpus {
    /// Assembles a corpus from named bags, dropping contexts shorter than two
    /// tokens. Used for synthetic corpora that bypass dump filtering.
    pub fn from_contexts<I, U, S>(month: MonthId, contexts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, Vec<(S, u32)>)>,
        U: Into<String>,
        S: Into<String>,
    {
        let mut bags: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for (user, tokens) in contexts {
            let bag = bags.entry(user.into()).or_default();
            for (s, c) in tokens {
                if c > 0 {
                    *bag.entry(s.into()).or_default() += c;
                }
            }
        }
        let mut stats = SnapshotStats::default();
        bags.retain(|_, bag| {
            let n: u64 = bag.values().map(|&c| c as u64).sum();
            if n < 2 {
                stats.users_short_context += 1;
                stats.dropped.short_context += n;
                false
            } else {
                true
            }
        });
        let corpus = assemble(month, bags, stats)?;
        Ok(corpus)
    }

    pub fn month(&self) -> MonthId {
        self.month
    }

    /// `(name, post-filter comment count)` in index order.
    pub fn vocab(&self) -> &[(String, u64)] {
        &self.vocab
    }

    pub fn vocab_names(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(|(s, _)| s.as_str())
    }

    pub fn vocab_index(&self, name: &str) -> Option<usize> {
        self.vocab.binary_search_by(|(s, _)| s.as_str().cmp(name)).ok()
    }

    pub fn comment_counts(&self) -> BTreeMap<String, u64> {
        self.vocab.iter().cloned().collect()
    }

    pub fn contexts(&self) -> &[UserContext] {
        &self.contexts
    }

    pub fn stats(&self) -> &SnapshotStats {
        &self.stats
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}

fn assemble(
    month: MonthId,
    bags: BTreeMap<String, BTreeMap<String, u32>>,
    mut stats: SnapshotStats,
) -> Result<SnapshotCorpus> {
    if bags.is_empty() {
        return Err(Error::EmptyCorpus(month));
    }
    let mut vocab_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for bag in bags.values() {
        for (s, &c) in bag {
            *vocab_counts.entry(s.as_str()).or_default() += c as u64;
        }
    }
    let index: HashMap<&str, u32> = vocab_counts
        .keys()
        .enumerate()
        .map(|(i, s)| (*s, i as u32))
        .collect();
    let contexts: Vec<UserContext> = bags
        .iter()
        .map(|(user, bag)| UserContext {
            user: user.clone(),
            tokens: bag.iter().map(|(s, &c)| (index[s.as_str()], c)).collect(),
        })
        .collect();
    let vocab: Vec<(String, u64)> = vocab_counts
        .iter()
        .map(|(s, &c)| (s.to_string(), c))
        .collect();
    stats.total_comments = vocab.iter().map(|(_, c)| c).sum();
    stats.unique_users = contexts.len() as u64;
    Ok(SnapshotCorpus {
        month,
        vocab,
        contexts,
        stats,
    })
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p * n)` of the
/// ascending sort. Callers drop entities whose count is strictly greater.
pub fn percentile_cutoff(counts: &[u64], p: f64) -> Result<u64> {
    if counts.is_empty() {
        return Err(Error::invalid("percentile of an empty multiset"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("percentile {p} outside (0, 1]")));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    // 0.95 * 100 must land on rank 95, not 96.
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

/// Applies the monthly filters in order:
///
/// 1. keep the `top_n` subreddits by raw comment count, never profile pages;
///    ties at the boundary are broken by name;
/// 2. drop deleted authors, deleted or removed bodies, and authors with a
///    single comment in the raw month;
/// 3. drop users whose remaining count exceeds the nearest-rank percentile;
/// 4. drop users left with fewer than two tokens.
pub fn build_snapshot(records: &[CommentRecord], config: &FilterConfig) -> Result<SnapshotCorpus> {
    config.validate()?;
    for r in records {
        match r.month() {
            Some(m) if m == config.month => {}
            found => {
                return Err(Error::ForeignMonth {
                    id: r.id.clone(),
                    expected: config.month,
                    found: found.unwrap_or(config.month),
                })
            }
        }
    }

    let mut stats = SnapshotStats {
        raw_records: records.len() as u64,
        ..Default::default()
    };

    let mut sub_counts: HashMap<&str, u64> = HashMap::new();
    let mut author_counts: HashMap<&str, u64> = HashMap::new();
    for r in records {
        if !r.subreddit.starts_with(PROFILE_PREFIX) {
            *sub_counts.entry(&r.subreddit).or_default() += 1;
        }
        *author_counts.entry(&r.author).or_default() += 1;
    }
    let mut ranked: Vec<(&str, u64)> = sub_counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(config.top_n_subreddits);
    let top: HashSet<&str> = ranked.iter().map(|(s, _)| *s).collect();

    let mut bags: BTreeMap<&str, BTreeMap<&str, u32>> = BTreeMap::new();
    for r in records {
        let dropped = &mut stats.dropped;
        if r.subreddit.starts_with(PROFILE_PREFIX) {
            dropped.profile_page += 1;
        } else if !top.contains(r.subreddit.as_str()) {
            dropped.not_top_subreddit += 1;
        } else if r.author == DELETED_AUTHOR {
            dropped.deleted_author += 1;
        } else if r.body_state != BodyState::Present {
            dropped.deleted_or_removed += 1;
        } else if author_counts[r.author.as_str()] == 1 {
            dropped.single_comment_user += 1;
        } else {
            *bags.entry(&r.author).or_default().entry(&r.subreddit).or_default() += 1;
        }
    }

    let totals: Vec<u64> = bags
        .values()
        .map(|bag| bag.values().map(|&c| c as u64).sum())
        .collect();
    if totals.is_empty() {
        return Err(Error::EmptyCorpus(config.month));
    }
    let cutoff = percentile_cutoff(&totals, config.activity_percentile)?;
    stats.percentile_cutoff = Some(cutoff);

    let mut kept: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for ((user, bag), total) in bags.into_iter().zip(totals) {
        if total > cutoff {
            stats.users_above_percentile += 1;
            stats.dropped.above_percentile += total;
        } else if total < 2 {
            stats.users_short_context += 1;
            stats.dropped.short_context += total;
        } else {
            kept.insert(
                user.to_string(),
                bag.into_iter().map(|(s, c)| (s.to_string(), c)).collect(),
            );
        }
    }
    assemble(config.month, kept, stats)
}
