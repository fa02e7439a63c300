//! Subreddit analogies: pair files, query generation, 3CosAdd solving and
//! Precision@K.
//!
//! A pair file groups `left right` pairs (e.g. city and team) under
//! `: category` headers. A query built from pairs `(l1, r1)` and `(l2, r2)`
//! asks for `r1 - l1 + l2` and accepts any right member paired with `l2`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingModel, Neighbor};
use crate::{Error, Exec, MonthId, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub left: String,
    pub right: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnalogySet {
    categories: BTreeMap<String, Vec<Pair>>,
    acceptable: BTreeMap<(String, String), BTreeSet<String>>,
}

impl AnalogySet {
    pub fn insert(&mut self, category: &str, left: &str, right: &str) {
        let pairs = self.categories.entry(category.to_string()).or_default();
        let pair = Pair {
            left: left.to_string(),
            right: right.to_string(),
        };
        if pairs.contains(&pair) {
            return;
        }
        pairs.push(pair);
        self.acceptable
            .entry((category.to_string(), left.to_string()))
            .or_default()
            .insert(right.to_string());
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &[Pair])> {
        self.categories.iter().map(|(c, p)| (c.as_str(), p.as_slice()))
    }

    /// Right members accepted for `left` within `category`.
    pub fn acceptable(&self, category: &str, left: &str) -> Option<&BTreeSet<String>> {
        self.acceptable.get(&(category.to_string(), left.to_string()))
    }

    pub fn pair_count(&self) -> usize {
        self.categories.values().map(Vec::len).sum()
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut set = AnalogySet::default();
        let mut category: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message: message.to_string(),
            };
            if let Some(name) = line.strip_prefix(':') {
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(err("category header must be a single name"));
                }
                category = Some(name.to_string());
                continue;
            }
            let cat = category.as_deref().ok_or_else(|| err("pair before any category header"))?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) => set.insert(cat, l, r),
                _ => return Err(err("expected exactly two names")),
            }
        }
        Ok(set)
    }
}

pub fn load_pairs(path: &Path) -> Result<AnalogySet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AnalogySet::parse(&text, &path.display().to_string())
}

/// A `b - a + c = ?` query.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnalogyQuery {
    pub category: String,
    pub a: String,
    pub b: String,
    pub c: String,
    pub expected: BTreeSet<String>,
}

impl AnalogyQuery {
    fn terms(&self) -> [&str; 3] {
        [&self.a, &self.b, &self.c]
    }

    #[cfg(test)]
    fn involves(&self, name: &str) -> bool {
        self.terms().contains(&name)
    }
}

/// All queries over ordered pairs of distinct pairs in each category.
///
/// Queries whose third term repeats one of the first two are skipped, and
/// queries that coincide (two pairs sharing a left member) are emitted once.
pub fn generate_queries(set: &AnalogySet) -> Vec<AnalogyQuery> {
    let mut out = Vec::new();
    for (category, pairs) in set.categories() {
        let mut seen = BTreeSet::new();
        for (i, p1) in pairs.iter().enumerate() {
            for (j, p2) in pairs.iter().enumerate() {
                if i == j || p1.left == p1.right || p2.left == p1.left || p2.left == p1.right {
                    continue;
                }
                let Some(acc) = set.acceptable(category, &p2.left) else { continue };
                let expected: BTreeSet<String> = acc
                    .iter()
                    .filter(|s| **s != p1.left && **s != p1.right && **s != p2.left)
                    .cloned()
                    .collect();
                if expected.is_empty() {
                    continue;
                }
                let q = AnalogyQuery {
                    category: category.to_string(),
                    a: p1.left.clone(),
                    b: p1.right.clone(),
                    c: p2.left.clone(),
                    expected,
                };
                if seen.insert((q.a.clone(), q.b.clone(), q.c.clone())) {
                    out.push(q);
                }
            }
        }
    }
    out
}

/// Queries whose three terms and at least one expected answer are in the
/// vocabulary; expected sets are restricted to in-vocabulary answers.
pub fn solvable(queries: &[AnalogyQuery], in_vocab: impl Fn(&str) -> bool) -> Vec<AnalogyQuery> {
    queries
        .iter()
        .filter(|q| q.terms().iter().all(|t| in_vocab(t)))
        .filter_map(|q| {
            let expected: BTreeSet<String> = q.expected.iter().filter(|s| in_vocab(s)).cloned().collect();
            (!expected.is_empty()).then(|| AnalogyQuery {
                expected,
                ..q.clone()
            })
        })
        .collect()
}

/// Ranks the vocabulary by cosine similarity to the normalized `b - a + c`,
/// excluding the three query terms.
pub fn solve_3cosadd(model: &EmbeddingModel, q: &AnalogyQuery, topn: usize) -> Result<Vec<Neighbor>> {
    if !model.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let idx = |s: &str| model.index_of(s).ok_or_else(|| Error::Unsolvable(format!("{} - {} + {}", q.b, q.a, q.c)));
    let (a, b, c) = (idx(&q.a)?, idx(&q.b)?, idx(&q.c)?);
    let v = model.vectors();
    let mut target: Vec<f64> = (0..model.dim())
        .map(|d| v[[b, d]] as f64 - v[[a, d]] as f64 + v[[c, d]] as f64)
        .collect();
    let norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        target.iter_mut().for_each(|x| *x /= norm);
    }
    let sims = model.dots(&target);
    Ok(model.top_ranked(&sims, topn, |i| i == a || i == b || i == c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub solvable: usize,
    pub correct: usize,
    /// `None` when the category has no solvable query.
    pub precision: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub k: usize,
    pub queries: usize,
    pub solvable: usize,
    pub correct: usize,
    /// `None` when nothing is solvable: the score is undefined, not zero.
    pub overall: Option<f64>,
    pub categories: BTreeMap<String, CategoryScore>,
}

fn ratio(correct: usize, solvable: usize) -> Option<f64> {
    (solvable > 0).then(|| correct as f64 / solvable as f64)
}

/// Fraction of solvable queries with an accepted answer in the top `k`.
pub fn precision_at_k(model: &EmbeddingModel, queries: &[AnalogyQuery], k: usize) -> Result<PrecisionReport> {
    precision_at_k_with(model, queries, k, Exec::default())
}

pub fn precision_at_k_with(model: &EmbeddingModel, queries: &[AnalogyQuery], k: usize, exec: Exec) -> Result<PrecisionReport> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !model.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let live = solvable(queries, |s| model.contains(s));
    let hits = exec.map(&live, |q| {
        solve_3cosadd(model, q, k).map(|top| top.iter().any(|n| q.expected.contains(&n.name)))
    });
    let mut categories: BTreeMap<String, CategoryScore> = BTreeMap::new();
    for (cat, _) in queries.iter().map(|q| (q.category.clone(), ())) {
        categories.entry(cat).or_insert(CategoryScore {
            solvable: 0,
            correct: 0,
            precision: None,
        });
    }
    let mut correct = 0;
    for (q, hit) in live.iter().zip(hits) {
        let hit = hit?;
        let entry = categories.get_mut(&q.category).expect("category registered");
        entry.solvable += 1;
        if hit {
            entry.correct += 1;
            correct += 1;
        }
    }
    for c in categories.values_mut() {
        c.precision = ratio(c.correct, c.solvable);
    }
    Ok(PrecisionReport {
        k,
        queries: queries.len(),
        solvable: live.len(),
        correct,
        overall: ratio(correct, live.len()),
        categories,
    })
}

impl PrecisionReport {
    /// Rows of `month,category,solvable,correct,p_at_k`; the overall score
    /// uses category `all`. Undefined scores are written as empty fields.
    pub fn write_csv<W: std::io::Write>(&self, month: MonthId, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "category", "solvable", "correct", "p_at_k"])?;
        let fmt = |p: Option<f64>| p.map(|p| format!("{p:.6}")).unwrap_or_default();
        for (cat, s) in &self.categories {
            w.write_record([
                month.to_string(),
                cat.clone(),
                s.solvable.to_string(),
                s.correct.to_string(),
                fmt(s.precision),
            ])?;
        }
        w.write_record([
            month.to_string(),
            "all".to_string(),
            self.solvable.to_string(),
            self.correct.to_string(),
            fmt(self.overall),
        ])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
