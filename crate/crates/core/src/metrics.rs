//! Cluster-quality scores, partition comparisons and annotation statistics.
//!
//! Information quantities are in bits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::cluster::Clustering;
use crate::embed::EmbeddingModel;
use crate::{Error, Exec, Result};

/// Subreddit → cluster id over some point set.
pub type Partition = BTreeMap<String, usize>;

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::Degenerate("Jaccard similarity of two empty sets".into()));
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

fn check_labels(n: usize, labels: &[usize]) -> Result<Vec<usize>> {
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if k < 2 {
        return Err(Error::TooFewClusters { needed: 2, got: k });
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!("cluster {c} is empty")));
    }
    Ok(sizes)
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rows_f64(vectors: ArrayView2<'_, f32>) -> Vec<Vec<f64>> {
    vectors
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub mean: f64,
    pub per_point: Vec<f64>,
}

/// Mean silhouette under Euclidean distance. Points in singleton clusters
/// score 0.
pub fn silhouette(vectors: ArrayView2<'_, f32>, labels: &[usize]) -> Result<Silhouette> {
    silhouette_with(vectors, labels, Exec::default())
}

pub fn silhouette_with(vectors: ArrayView2<'_, f32>, labels: &[usize], exec: Exec) -> Result<Silhouette> {
    let n = vectors.nrows();
    let sizes = check_labels(n, labels)?;
    let k = sizes.len();
    let rows = rows_f64(vectors);
    let per_point = exec.map_range(n, |i| {
        let own = labels[i];
        if sizes[own] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += euclid(&rows[i], &rows[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            (b - a) / denom
        } else {
            0.0
        }
    });
    let mean = per_point.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { mean, per_point })
}

/// Davies-Bouldin index with Euclidean scatter and centroid separation.
pub fn davies_bouldin(vectors: ArrayView2<'_, f32>, labels: &[usize]) -> Result<f64> {
    let n = vectors.nrows();
    let sizes = check_labels(n, labels)?;
    let k = sizes.len();
    let dim = vectors.ncols();
    let rows = rows_f64(vectors);
    let mut centroids = vec![vec![0.0; dim]; k];
    for (row, &l) in rows.iter().zip(labels) {
        for (c, x) in centroids[l].iter_mut().zip(row) {
            *c += x;
        }
    }
    for (c, &s) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|x| *x /= s as f64);
    }
    let mut scatter = vec![0.0; k];
    for (row, &l) in rows.iter().zip(labels) {
        scatter[l] += euclid(row, &centroids[l]);
    }
    for (s, &size) in scatter.iter_mut().zip(&sizes) {
        *s /= size as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = euclid(&centroids[i], &centroids[j]);
            if d == 0.0 {
                return Err(Error::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Co-membership counts of two labelings over the same points.
#[derive(Clone, Debug)]
pub struct ContingencyTable {
    rows: Vec<u64>,
    cols: Vec<u64>,
    cells: BTreeMap<(usize, usize), u64>,
    total: u64,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::MismatchedPoints);
        }
        let (a, ka) = dense(a);
        let (b, kb) = dense(b);
        let mut rows = vec![0u64; ka];
        let mut cols = vec![0u64; kb];
        let mut cells = BTreeMap::new();
        for (&x, &y) in a.iter().zip(&b) {
            rows[x] += 1;
            cols[y] += 1;
            *cells.entry((x, y)).or_insert(0) += 1;
        }
        Ok(Self {
            rows,
            cols,
            cells,
            total: a.len() as u64,
        })
    }

    /// Count at (row cluster, column cluster) in first-appearance order.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.cells.get(&(i, j)).copied().unwrap_or(0)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row_entropy(&self) -> f64 {
        entropy_of_counts(&self.rows, self.total)
    }

    pub fn col_entropy(&self) -> f64 {
        entropy_of_counts(&self.cols, self.total)
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.total as f64;
        let mut mi = 0.0;
        for (&(i, j), &c) in &self.cells {
            let pij = c as f64 / n;
            let ratio = (c as f64 * n) / (self.rows[i] as f64 * self.cols[j] as f64);
            mi += pij * ratio.log2();
        }
        mi.max(0.0)
    }

    /// `H(A|B) + H(B|A)` summed cell by cell, which keeps the result
    /// non-negative without cancellation.
    pub fn variation_of_information(&self) -> f64 {
        let n = self.total as f64;
        let mut vi = 0.0;
        for (&(i, j), &c) in &self.cells {
            let c = c as f64;
            vi += c / n * ((self.rows[i] as f64 / c).log2() + (self.cols[j] as f64 / c).log2());
        }
        vi.max(0.0)
    }
}

fn entropy_of_counts(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

pub fn entropy(labels: &[usize]) -> f64 {
    let (d, k) = dense(labels);
    let mut counts = vec![0u64; k];
    d.iter().for_each(|&l| counts[l] += 1);
    entropy_of_counts(&counts, labels.len() as u64)
}

pub fn mutual_information(a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::new(a, b)?.mutual_information())
}

/// VI between two labelings of the same points, in bits.
pub fn vi_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::new(a, b)?.variation_of_information())
}

/// VI between two partitions of exactly the same subreddits.
pub fn variation_of_information(a: &Partition, b: &Partition) -> Result<f64> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::MismatchedPoints);
    }
    let la: Vec<usize> = a.values().copied().collect();
    let lb: Vec<usize> = b.values().copied().collect();
    vi_labels(&la, &lb)
}

/// `2 log2(max clusters)`: the VI ceiling when there are at most that many
/// clusters and no more than its square of points.
pub fn vi_upper_bound(max_clusters: usize) -> f64 {
    2.0 * (max_clusters as f64).log2()
}

/// Extends both partitions to the union of their point sets; points missing
/// from one side form one extra cluster there. Empty extensions are omitted.
pub fn extend_clusterings(a: &Partition, b: &Partition) -> (Partition, Partition) {
    fn extend(base: &Partition, other: &Partition) -> Partition {
        let extra = base.values().max().map_or(0, |m| m + 1);
        let mut out = base.clone();
        for name in other.keys() {
            out.entry(name.clone()).or_insert(extra);
        }
        out
    }
    (extend(a, b), extend(b, a))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceRating {
    pub coherent: bool,
    pub theme: Option<String>,
}

/// Coherence judgments keyed by (annotator, cluster id).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoherenceAnnotations {
    ratings: BTreeMap<(String, usize), CoherenceRating>,
}

#[derive(Deserialize)]
struct CoherenceRow {
    annotator: String,
    cluster_id: usize,
    coherent: u8,
    #[serde(default)]
    theme: Option<String>,
}

impl CoherenceAnnotations {
    pub fn insert(&mut self, annotator: &str, cluster: usize, coherent: bool, theme: Option<String>) -> Result<()> {
        let key = (annotator.to_string(), cluster);
        if self.ratings.contains_key(&key) {
            return Err(Error::InvalidAnnotation(format!(
                "{annotator} rated cluster {cluster} more than once"
            )));
        }
        self.ratings.insert(key, CoherenceRating { coherent, theme });
        Ok(())
    }

    /// Reads `annotator,cluster_id,coherent,theme` rows; `coherent` is 0 or 1.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut out = Self::default();
        for row in rdr.deserialize() {
            let row: CoherenceRow = row?;
            if row.coherent > 1 {
                return Err(Error::InvalidAnnotation(format!("coherent must be 0 or 1, got {}", row.coherent)));
            }
            let theme = row.theme.filter(|t| !t.is_empty());
            out.insert(&row.annotator, row.cluster_id, row.coherent == 1, theme)?;
        }
        Ok(out)
    }

    pub fn annotators(&self) -> BTreeSet<&str> {
        self.ratings.keys().map(|(a, _)| a.as_str()).collect()
    }

    /// Cluster ids with at least one rating, ascending.
    pub fn rated_clusters(&self) -> Vec<usize> {
        let ids: BTreeSet<usize> = self.ratings.keys().map(|(_, c)| *c).collect();
        ids.into_iter().collect()
    }

    /// (ratings, coherent votes) for a cluster.
    fn votes(&self, cluster: usize) -> (usize, usize) {
        self.ratings
            .iter()
            .filter(|((_, c), _)| *c == cluster)
            .fold((0, 0), |(r, y), (_, v)| (r + 1, y + v.coherent as usize))
    }
}

/// Gwet's AC1 for binary coherent / not-coherent ratings.
pub fn gwet_ac1(annotations: &CoherenceAnnotations, items: &[usize]) -> Result<f64> {
    if annotations.annotators().len() < 2 {
        return Err(Error::InsufficientRatings("at least two annotators required".into()));
    }
    let votes: Vec<(usize, usize)> = items.iter().map(|&c| annotations.votes(c)).collect();
    let rated: Vec<&(usize, usize)> = votes.iter().filter(|(r, _)| *r >= 1).collect();
    let multi: Vec<&(usize, usize)> = votes.iter().filter(|(r, _)| *r >= 2).collect();
    if multi.is_empty() {
        return Err(Error::InsufficientRatings("no item has two or more ratings".into()));
    }
    let pa = multi
        .iter()
        .map(|&&(r, y)| {
            let no = r - y;
            (y * y.saturating_sub(1) + no * no.saturating_sub(1)) as f64 / (r * (r - 1)) as f64
        })
        .sum::<f64>()
        / multi.len() as f64;
    let q = rated.iter().map(|&&(r, y)| y as f64 / r as f64).sum::<f64>() / rated.len() as f64;
    let pe = 2.0 * q * (1.0 - q);
    Ok((pa - pe) / (1.0 - pe))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSummary {
    pub per_cluster: BTreeMap<usize, f64>,
    pub mean: f64,
    /// Share of clusters at least one annotator found coherent.
    pub c_upper: f64,
    /// Share of clusters every annotator found coherent.
    pub c_lower: f64,
}

pub fn coherence_scores(annotations: &CoherenceAnnotations, clusters: &[usize]) -> Result<CoherenceSummary> {
    let mut per_cluster = BTreeMap::new();
    let mut unrated = Vec::new();
    for &c in clusters {
        let (r, y) = annotations.votes(c);
        if r == 0 {
            unrated.push(c);
        } else {
            per_cluster.insert(c, y as f64 / r as f64);
        }
    }
    if !unrated.is_empty() {
        return Err(Error::UnratedClusters(unrated));
    }
    if per_cluster.is_empty() {
        return Err(Error::InsufficientRatings("no clusters given".into()));
    }
    let n = per_cluster.len() as f64;
    let mean = per_cluster.values().sum::<f64>() / n;
    let c_upper = per_cluster.values().filter(|&&s| s > 0.0).count() as f64 / n;
    let c_lower = per_cluster.values().filter(|&&s| s == 1.0).count() as f64 / n;
    Ok(CoherenceSummary {
        per_cluster,
        mean,
        c_upper,
        c_lower,
    })
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("pearson_r needs two equal-length series of at least two values"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Contents of `metrics.json` for one (month, algorithm, k).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub cluster_sizes: Vec<usize>,
    pub size_stddev: f64,
    pub singleton_clusters: usize,
}

/// Intrinsic scores of a clustering over a normalized model. Scores that
/// are undefined (k < 2, coincident centroids) are reported as `None`.
pub fn evaluate(model: &EmbeddingModel, clustering: &Clustering) -> Result<ClusterMetrics> {
    if !model.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let labels = clustering.labels_for(model.vocab())?;
    let sizes = clustering.sizes();
    let as_f: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let (_, size_stddev) = mean_std(&as_f);
    let defined = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::TooFewClusters { .. } | Error::CoincidentCentroids(..)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(ClusterMetrics {
        silhouette: defined(silhouette(model.vectors(), &labels).map(|s| s.mean))?,
        davies_bouldin: defined(davies_bouldin(model.vectors(), &labels))?,
        singleton_clusters: sizes.iter().filter(|&&s| s == 1).count(),
        cluster_sizes: sizes,
        size_stddev,
    })
}

impl ClusterMetrics {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn part(pairs: &[(&str, usize)]) -> Partition {
        pairs.iter().map(|(s, c)| (s.to_string(), *c)).collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])).unwrap(), 0.0);
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])).unwrap(), 0.5);
        assert!(jaccard(&set(&[]), &set(&[])).is_err());
    }

    #[test]
    fn silhouette_four_points_by_hand() {
        // Pairs {0,1} at x = 0, 1 and {2,3} at x = 4, 6.
        let v: Array2<f32> = array![[0.0], [1.0], [4.0], [6.0]];
        let s = silhouette(v.view(), &[0, 0, 1, 1]).unwrap();
        let expect = [
            (5.0 - 1.0) / 5.0, // a = 1, b = (4 + 6) / 2
            (4.0 - 1.0) / 4.0, // a = 1, b = (3 + 5) / 2
            (3.5 - 2.0) / 3.5, // a = 2, b = (4 + 3) / 2
            (5.5 - 2.0) / 5.5, // a = 2, b = (6 + 5) / 2
        ];
        for (got, want) in s.per_point.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn silhouette_degenerate_cases() {
        let far: Array2<f32> = array![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]];
        assert!((silhouette(far.view(), &[0, 0, 1, 1]).unwrap().mean - 1.0).abs() < 1e-9);
        let same: Array2<f32> = array![[1.0], [1.0], [1.0], [1.0]];
        assert_eq!(silhouette(same.view(), &[0, 0, 1, 1]).unwrap().mean, 0.0);
        let single: Array2<f32> = array![[0.0], [1.0], [5.0]];
        assert_eq!(silhouette(single.view(), &[0, 0, 1]).unwrap().per_point[2], 0.0);
        assert!(matches!(silhouette(same.view(), &[0, 0, 0, 0]), Err(Error::TooFewClusters { .. })));
    }

    #[test]
    fn davies_bouldin_examples() {
        let masses: Array2<f32> = array![[0.0], [0.0], [3.0], [3.0]];
        assert_eq!(davies_bouldin(masses.view(), &[0, 0, 1, 1]).unwrap(), 0.0);
        // Scatter 1 around centroids 0 and 4.
        let sym: Array2<f32> = array![[-1.0], [1.0], [3.0], [5.0]];
        assert!((davies_bouldin(sym.view(), &[0, 0, 1, 1]).unwrap() - 0.5).abs() < 1e-12);
        let coincide: Array2<f32> = array![[-1.0], [1.0], [-2.0], [2.0]];
        assert!(matches!(davies_bouldin(coincide.view(), &[0, 0, 1, 1]), Err(Error::CoincidentCentroids(0, 1))));
        assert!(davies_bouldin(sym.view(), &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn entropy_and_information() {
        assert_eq!(entropy(&[3, 3, 3]), 0.0);
        assert!((entropy(&[0, 0, 1, 1]) - 1.0).abs() < 1e-15);
        assert_eq!(mutual_information(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert!((mutual_information(&[0, 0, 1, 1], &[5, 5, 9, 9]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vi_hand_cases() {
        let ab_cd = part(&[("a", 0), ("b", 0), ("c", 1), ("d", 1)]);
        let ac_bd = part(&[("a", 0), ("b", 1), ("c", 0), ("d", 1)]);
        assert_eq!(variation_of_information(&ab_cd, &ab_cd).unwrap(), 0.0);
        assert!((variation_of_information(&ab_cd, &ac_bd).unwrap() - 2.0).abs() < 1e-12);
        let other = part(&[("a", 0), ("b", 0), ("c", 1), ("e", 1)]);
        assert!(matches!(variation_of_information(&ab_cd, &other), Err(Error::MismatchedPoints)));
        // VI equals H(A) + H(B) - 2 I(A, B).
        let a = [0, 0, 1, 1, 2, 2, 2];
        let b = [0, 1, 1, 1, 0, 2, 2];
        let direct = entropy(&a) + entropy(&b) - 2.0 * mutual_information(&a, &b).unwrap();
        assert!((vi_labels(&a, &b).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn vi_bound_constant() {
        assert!((vi_upper_bound(101) - 13.3165).abs() < 1e-4);
        assert_eq!(format!("{:.2}", vi_upper_bound(101)), "13.32");
    }

    #[test]
    fn contingency_shape_and_total() {
        let t = ContingencyTable::new(&[0, 0, 1, 2], &[7, 8, 8, 8]).unwrap();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.total(), 4);
        assert_eq!(t.get(0, 0), 1);
        assert_eq!(t.get(2, 1), 1);
        assert_eq!(t.get(2, 0), 0);
    }

    #[test]
    fn extension_examples() {
        let same = part(&[("a", 0), ("b", 1)]);
        let (x, y) = extend_clusterings(&same, &same);
        assert_eq!((x, y), (same.clone(), same.clone()));

        let disjoint = part(&[("c", 0), ("d", 0)]);
        let (x, y) = extend_clusterings(&same, &disjoint);
        assert_eq!(x, part(&[("a", 0), ("b", 1), ("c", 2), ("d", 2)]));
        assert_eq!(y, part(&[("a", 1), ("b", 1), ("c", 0), ("d", 0)]));

        let ci = part(&[("a", 0), ("b", 0), ("c", 1)]);
        let cj = part(&[("b", 0), ("c", 1), ("d", 1)]);
        let (x, y) = extend_clusterings(&ci, &cj);
        assert_eq!(x["d"], 2);
        assert_eq!(y["a"], 2);
        assert_eq!(x.keys().collect::<Vec<_>>(), ["a", "b", "c", "d"]);
        assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
    }

    fn annotations(votes: &[&[u8]]) -> CoherenceAnnotations {
        let mut a = CoherenceAnnotations::default();
        for (item, v) in votes.iter().enumerate() {
            for (r, &x) in v.iter().enumerate() {
                a.insert(&format!("r{r}"), item, x == 1, None).unwrap();
            }
        }
        a
    }

    #[test]
    fn gwet_examples() {
        let agree = annotations(&[&[1, 1, 1], &[0, 0, 0], &[1, 1, 1]]);
        assert_eq!(gwet_ac1(&agree, &[0, 1, 2]).unwrap(), 1.0);
        let split = annotations(&[&[1, 1, 0], &[0, 0, 1]]);
        assert!((gwet_ac1(&split, &[0, 1]).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        let one = annotations(&[&[1], &[0]]);
        assert!(matches!(gwet_ac1(&one, &[0, 1]), Err(Error::InsufficientRatings(_))));
    }

    #[test]
    fn duplicate_rating_rejected() {
        let mut a = CoherenceAnnotations::default();
        a.insert("x", 1, true, None).unwrap();
        assert!(a.insert("x", 1, false, None).is_err());
    }

    #[test]
    fn coherence_examples() {
        let a = annotations(&[&[1, 1, 0]]);
        assert!((coherence_scores(&a, &[0]).unwrap().per_cluster[&0] - 2.0 / 3.0).abs() < 1e-12);

        let all = annotations(&[&[1, 1, 1], &[1, 1, 1]]);
        let s = coherence_scores(&all, &[0, 1]).unwrap();
        assert_eq!((s.mean, s.c_upper, s.c_lower), (1.0, 1.0, 1.0));

        let mixed = annotations(&[&[1, 1, 1], &[1, 1, 0], &[0, 0, 0], &[1, 0, 0]]);
        let s = coherence_scores(&mixed, &[0, 1, 2, 3]).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-12);
        assert_eq!((s.c_upper, s.c_lower), (0.75, 0.25));

        assert!(matches!(coherence_scores(&mixed, &[0, 9, 7]), Err(Error::UnratedClusters(ids)) if ids == vec![9, 7]));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &y2).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn coherence_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "annotator,cluster_id,coherent,theme\nann1,0,1,sports\nann2,0,0,\n").unwrap();
        let a = CoherenceAnnotations::read_csv(&p).unwrap();
        assert_eq!(a.annotators().len(), 2);
        std::fs::write(&p, "annotator,cluster_id,coherent,theme\nann1,0,3,\n").unwrap();
        assert!(CoherenceAnnotations::read_csv(&p).is_err());
    }
}
