//! Cross-month analyses over independently trained snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_pp_with, Clustering};
use crate::embed::{EmbeddingModel, Neighbor};
use crate::metrics::{extend_clusterings, jaccard, mean_std, pearson_r, variation_of_information};
use crate::{Error, Exec, MonthId, Result};

pub const HISTOGRAM_BINS: usize = 50;

/// Equal-width bins over `[0, 1]`; 1.0 lands in the last bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn unit(values: impl IntoIterator<Item = f64>, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        for v in values {
            let b = ((v * bins as f64).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Self { edges, counts }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubredditStability {
    pub name: String,
    /// Jaccard of consecutive months' neighbor sets; one per adjacent pair.
    pub scores: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
    pub popularity: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub months: Vec<MonthId>,
    pub n: usize,
    pub subreddits: Vec<SubredditStability>,
    /// Mean and population stddev of the per-subreddit means.
    pub mean: f64,
    pub stddev: f64,
    pub histogram: Histogram,
    /// Correlation of per-subreddit mean with popularity; `None` when either
    /// side has no variance.
    pub popularity_r: Option<f64>,
}

fn check_months(models: &[EmbeddingModel]) -> Result<()> {
    if models.len() < 2 {
        return Err(Error::invalid("at least two months are required"));
    }
    if let Some(m) = models.iter().find(|m| !m.is_normalized()) {
        return Err(Error::invalid(format!("model for {} is not normalized", m.month())));
    }
    Ok(())
}

fn neighbor_set(model: &EmbeddingModel, name: &str, n: usize) -> Result<BTreeSet<String>> {
    Ok(model.nearest_neighbors(name, n)?.into_iter().map(|nb| nb.name).collect())
}

/// Adjacent-month Jaccard of each shared subreddit's `n` nearest neighbors.
/// Only subreddits present in every month take part. `popularity` gives
/// total comments per subreddit; missing names count as 0.
pub fn nn_stability(
    models: &[EmbeddingModel],
    n: usize,
    popularity: &BTreeMap<String, u64>,
    exec: Exec,
) -> Result<StabilityReport> {
    check_months(models)?;
    let shared: Vec<&String> = models[0]
        .vocab()
        .iter()
        .filter(|s| models[1..].iter().all(|m| m.contains(s)))
        .collect();
    if shared.is_empty() {
        return Err(Error::Degenerate("no subreddit appears in every month".into()));
    }
    let rows: Vec<Result<SubredditStability>> = exec.map(&shared, |name| {
        let sets = models
            .iter()
            .map(|m| neighbor_set(m, name, n))
            .collect::<Result<Vec<_>>>()?;
        let scores = sets
            .windows(2)
            .map(|w| jaccard(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        let (mean, stddev) = mean_std(&scores);
        Ok(SubredditStability {
            name: (*name).clone(),
            scores,
            mean,
            stddev,
            popularity: popularity.get(*name).copied().unwrap_or(0),
        })
    });
    let mut subreddits = rows.into_iter().collect::<Result<Vec<_>>>()?;
    subreddits.sort_by(|a, b| a.name.cmp(&b.name));
    let means: Vec<f64> = subreddits.iter().map(|s| s.mean).collect();
    let pops: Vec<f64> = subreddits.iter().map(|s| s.popularity as f64).collect();
    let (mean, stddev) = mean_std(&means);
    let popularity_r = match pearson_r(&means, &pops) {
        Ok(r) => Some(r),
        Err(Error::ZeroVariance | Error::InvalidParameter(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(StabilityReport {
        months: models.iter().map(|m| m.month()).collect(),
        n,
        histogram: Histogram::unit(means.iter().copied(), HISTOGRAM_BINS),
        subreddits,
        mean,
        stddev,
        popularity_r,
    })
}

impl StabilityReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?)
    }

    /// One row per subreddit: name, popularity, mean, stddev, then the
    /// adjacent-pair scores labelled by their later month.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["subreddit".to_string(), "popularity".into(), "mean".into(), "stddev".into()];
        header.extend(self.months.windows(2).map(|p| format!("{}_{}", p[0], p[1])));
        w.write_record(&header)?;
        for s in &self.subreddits {
            let mut row = vec![s.name.clone(), s.popularity.to_string(), format!("{:.6}", s.mean), format!("{:.6}", s.stddev)];
            row.extend(s.scores.iter().map(|v| format!("{v:.6}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn summary(&self) -> StabilitySummary {
        StabilitySummary {
            months: self.months.clone(),
            n: self.n,
            subreddits: self.subreddits.len(),
            mean: self.mean,
            stddev: self.stddev,
            histogram: self.histogram.clone(),
            popularity_r: self.popularity_r,
        }
    }
}

/// The report without per-subreddit series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub months: Vec<MonthId>,
    pub n: usize,
    pub subreddits: usize,
    pub mean: f64,
    pub stddev: f64,
    pub histogram: Histogram,
    pub popularity_r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineCell {
    pub month: MonthId,
    /// `None` when the subreddit is absent that month.
    pub neighbors: Option<Vec<Neighbor>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub subreddit: String,
    pub n: usize,
    pub cells: Vec<TimelineCell>,
    /// Jaccard between consecutive cells; `None` if either side is absent.
    pub jaccard: Vec<Option<f64>>,
}

pub fn neighbor_timeline(models: &[EmbeddingModel], subreddit: &str, n: usize) -> Result<Timeline> {
    if models.iter().all(|m| !m.contains(subreddit)) {
        return Err(Error::UnknownSubreddit(subreddit.to_string()));
    }
    let cells = models
        .iter()
        .map(|m| {
            let neighbors = if m.contains(subreddit) {
                Some(m.nearest_neighbors(subreddit, n)?)
            } else {
                None
            };
            Ok(TimelineCell { month: m.month(), neighbors })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Timeline::from_cells(subreddit, n, cells))
}

impl Timeline {
    /// Builds a timeline from per-month neighbor lists, truncating each to
    /// `n` entries.
    pub fn from_cells(subreddit: &str, n: usize, mut cells: Vec<TimelineCell>) -> Self {
        for c in &mut cells {
            if let Some(v) = c.neighbors.as_mut() {
                v.truncate(n);
            }
        }
        let sets: Vec<Option<BTreeSet<&str>>> = cells
            .iter()
            .map(|c| c.neighbors.as_ref().map(|v| v.iter().map(|nb| nb.name.as_str()).collect()))
            .collect();
        let jaccard = sets
            .windows(2)
            .map(|w| match (&w[0], &w[1]) {
                (Some(a), Some(b)) => jaccard(a, b).ok(),
                _ => None,
            })
            .collect();
        Timeline {
            subreddit: subreddit.to_string(),
            n,
            cells,
            jaccard,
        }
    }
}

/// Symmetric matrix of mean VI in bits, with the number of clustering
/// comparisons averaged into each cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub comparisons: Vec<Vec<usize>>,
    /// Largest single comparison per cell.
    pub max: Vec<Vec<f64>>,
}

impl ViMatrix {
    fn build(labels: Vec<String>, cells: &[(usize, usize, Vec<f64>)]) -> Self {
        let m = labels.len();
        let mut values = vec![vec![0.0; m]; m];
        let mut comparisons = vec![vec![0; m]; m];
        let mut max = vec![vec![0.0; m]; m];
        for (i, j, vis) in cells {
            let mean = if vis.is_empty() { 0.0 } else { vis.iter().sum::<f64>() / vis.len() as f64 };
            let top = vis.iter().copied().fold(0.0, f64::max);
            for (a, b) in [(*i, *j), (*j, *i)] {
                values[a][b] = mean;
                comparisons[a][b] = vis.len();
                max[a][b] = top;
            }
        }
        Self {
            labels,
            values,
            comparisons,
            max,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.len();
        (0..m).all(|i| (0..m).all(|j| self.values[i][j] == self.values[j][i]))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?)
    }

    /// Long format: row, column, mean VI, comparisons, max VI.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "vi", "comparisons", "max"])?;
        for (i, a) in self.labels.iter().enumerate() {
            for (j, b) in self.labels.iter().enumerate() {
                w.write_record([
                    a.clone(),
                    b.clone(),
                    format!("{:.6}", self.values[i][j]),
                    self.comparisons[i][j].to_string(),
                    format!("{:.6}", self.max[i][j]),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// VI of two clusterings after extending both to the union of their
/// subreddits.
pub fn extended_vi(a: &Clustering, b: &Clustering) -> Result<f64> {
    let (x, y) = extend_clusterings(&a.assignment, &b.assignment);
    variation_of_information(&x, &y)
}

fn pair_cells(
    pairs: Vec<(usize, usize, Vec<(&Clustering, &Clustering)>)>,
    exec: Exec,
) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    exec.map(&pairs, |(i, j, comps)| {
        let vis = comps.iter().map(|(a, b)| extended_vi(a, b)).collect::<Result<Vec<_>>>()?;
        Ok((*i, *j, vis))
    })
    .into_iter()
    .collect()
}

/// Pairwise VI between one clustering per month, same algorithm and k.
pub fn vi_across_months(clusterings: &[Clustering], exec: Exec) -> Result<ViMatrix> {
    if clusterings.len() < 2 {
        return Err(Error::invalid("at least two clusterings are required"));
    }
    let m = clusterings.len();
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i..m {
            pairs.push((i, j, vec![(&clusterings[i], &clusterings[j])]));
        }
    }
    let labels = clusterings.iter().map(|c| c.month.to_string()).collect();
    Ok(ViMatrix::build(labels, &pair_cells(pairs, exec)?))
}

/// VI between clustering algorithms across distinct months. `series` holds
/// one month-ordered list per model type; all lists cover the same months.
/// A diagonal cell averages the `m(m-1)/2` unordered month pairs of one
/// model; an off-diagonal cell averages the `m(m-1)` ordered pairs of
/// distinct months.
pub fn vi_across_models(series: &[(String, Vec<Clustering>)], exec: Exec) -> Result<ViMatrix> {
    let m = series.first().map_or(0, |s| s.1.len());
    if m < 2 || series.iter().any(|s| s.1.len() != m) {
        return Err(Error::invalid("every model needs the same two or more months"));
    }
    let mut pairs = Vec::new();
    for a in 0..series.len() {
        for b in a..series.len() {
            let mut comps = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    if i != j && (a != b || i < j) {
                        comps.push((&series[a].1[i], &series[b].1[j]));
                    }
                }
            }
            pairs.push((a, b, comps));
        }
    }
    let labels = series.iter().map(|s| s.0.clone()).collect();
    Ok(ViMatrix::build(labels, &pair_cells(pairs, exec)?))
}

/// `runs` k-means++ clusterings of one model with seeds
/// `base_seed .. base_seed + runs`.
pub fn seed_runs(model: &EmbeddingModel, k: usize, runs: usize, base_seed: u64, exec: Exec) -> Result<Vec<Clustering>> {
    if runs < 2 {
        return Err(Error::invalid("seed sensitivity needs at least two runs"));
    }
    (0..runs as u64)
        .map(|r| kmeans_pp_with(model, k, base_seed + r, None, exec))
        .collect()
}

/// Mean and max VI between seed runs. Within a month the `C(runs, 2)` run
/// pairs are compared; across months every run of one against every run of
/// the other.
pub fn seed_sensitivity(months: &[Vec<Clustering>], exec: Exec) -> Result<ViMatrix> {
    if months.is_empty() || months.iter().any(|r| r.len() < 2) {
        return Err(Error::invalid("every month needs at least two seed runs"));
    }
    let m = months.len();
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i..m {
            let mut comps = Vec::new();
            for (x, a) in months[i].iter().enumerate() {
                for (y, b) in months[j].iter().enumerate() {
                    if i != j || x < y {
                        comps.push((a, b));
                    }
                }
            }
            pairs.push((i, j, comps));
        }
    }
    let labels = months.iter().map(|r| r[0].month.to_string()).collect();
    Ok(ViMatrix::build(labels, &pair_cells(pairs, exec)?))
}
