//! Flat and hierarchical clusterings of normalized embeddings.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingModel;
use crate::{Error, Exec, MonthId, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "kmeanspp")]
    KMeansPP,
    #[serde(rename = "ha_ward")]
    HaWard,
    #[serde(rename = "ha_average")]
    HaAverage,
    #[serde(rename = "ha_complete")]
    HaComplete,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::KMeansPP,
        Algorithm::HaWard,
        Algorithm::HaAverage,
        Algorithm::HaComplete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::KMeansPP => "kmeanspp",
            Algorithm::HaWard => "ha_ward",
            Algorithm::HaAverage => "ha_average",
            Algorithm::HaComplete => "ha_complete",
        }
    }

    pub fn linkage(self) -> Option<Linkage> {
        match self {
            Algorithm::KMeansPP => None,
            Algorithm::HaWard => Some(Linkage::Ward),
            Algorithm::HaAverage => Some(Linkage::Average),
            Algorithm::HaComplete => Some(Linkage::Complete),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Ward,
    Average,
    Complete,
}

impl Linkage {
    pub fn algorithm(self) -> Algorithm {
        match self {
            Linkage::Ward => Algorithm::HaWard,
            Linkage::Average => Algorithm::HaAverage,
            Linkage::Complete => Algorithm::HaComplete,
        }
    }
}

/// A flat partition of one month's vocabulary into `k` dense, non-empty
/// clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub month: MonthId,
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: Option<u64>,
    pub assignment: BTreeMap<String, usize>,
}

impl Clustering {
    pub fn from_labels(
        month: MonthId,
        algorithm: Algorithm,
        seed: Option<u64>,
        names: &[String],
        labels: &[usize],
    ) -> Result<Self> {
        if names.len() != labels.len() {
            return Err(Error::invalid("one label per name required"));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("cluster {empty} is empty")));
        }
        let assignment: BTreeMap<String, usize> = names.iter().cloned().zip(labels.iter().copied()).collect();
        if assignment.len() != names.len() {
            return Err(Error::invalid("duplicate names"));
        }
        Ok(Self {
            month,
            algorithm,
            k,
            seed,
            assignment,
        })
    }

    /// Labels in the order of `names`.
    pub fn labels_for(&self, names: &[String]) -> Result<Vec<usize>> {
        if names.len() != self.assignment.len() {
            return Err(Error::MismatchedPoints);
        }
        names
            .iter()
            .map(|n| self.assignment.get(n).copied().ok_or(Error::MismatchedPoints))
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.assignment.values().for_each(|&c| sizes[c] += 1);
        sizes
    }

    /// Members of each cluster, sorted by name.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.k];
        for (name, &c) in &self.assignment {
            out[c].push(name.as_str());
        }
        out
    }

    pub fn file_name(&self) -> String {
        format!("clusters_{}_{}.json", self.algorithm, self.k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Clustering = serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?;
        let names: Vec<String> = c.assignment.keys().cloned().collect();
        let labels: Vec<usize> = c.assignment.values().copied().collect();
        let check = Clustering::from_labels(c.month, c.algorithm, c.seed, &names, &labels)?;
        if check.k != c.k {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("declared k = {} but {} clusters present", c.k, check.k),
            });
        }
        Ok(c)
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside 1..={n}")));
    }
    Ok(())
}

/// Rows of a normalized model as f64, re-normalized so that duplicate
/// vectors compare at exactly zero distance.
fn unit_rows(model: &EmbeddingModel) -> Result<(Vec<f64>, usize)> {
    if !model.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let dim = model.dim();
    let mut data = Vec::with_capacity(model.len() * dim);
    for row in model.vectors().rows() {
        let norm = row.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        data.extend(row.iter().map(|&x| x as f64 / norm));
    }
    Ok((data, dim))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Default number of candidates per center for greedy k-means++.
pub fn default_trials(k: usize) -> usize {
    2 + (k as f64).ln().floor() as usize
}

/// Greedy k-means++ followed by Lloyd iterations on squared Euclidean
/// distance between the normalized vectors.
pub fn kmeans_pp(model: &EmbeddingModel, k: usize, seed: u64, trials: Option<usize>) -> Result<Clustering> {
    kmeans_pp_with(model, k, seed, trials, Exec::default())
}

pub fn kmeans_pp_with(model: &EmbeddingModel, k: usize, seed: u64, trials: Option<usize>, exec: Exec) -> Result<Clustering> {
    check_k(k, model.len())?;
    let (data, dim) = unit_rows(model)?;
    let labels = kmeans_labels(&data, dim, k, seed, trials.unwrap_or_else(|| default_trials(k)).max(1), exec);
    Clustering::from_labels(model.month(), Algorithm::KMeansPP, Some(seed), model.vocab(), &labels)
}

fn greedy_init(data: &[f64], dim: usize, k: usize, trials: usize, rng: &mut ChaCha8Rng, exec: Exec) -> Vec<usize> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centers = vec![rng.random_range(0..n)];
    let mut closest: Vec<f64> = exec.map_range(n, |i| sq_dist(row(i), row(centers[0])));
    let mut potential: f64 = closest.iter().sum();

    while centers.len() < k {
        let candidates: Vec<usize> = (0..trials)
            .map(|_| {
                if potential > 0.0 {
                    let target = rng.random::<f64>() * potential;
                    let mut acc = 0.0;
                    closest
                        .iter()
                        .position(|&d| {
                            acc += d;
                            acc > target
                        })
                        .unwrap_or_else(|| closest.iter().rposition(|&d| d > 0.0).unwrap_or(n - 1))
                } else {
                    // Every point coincides with a center; pick an unused index.
                    let free: Vec<usize> = (0..n).filter(|i| !centers.contains(i)).collect();
                    free[rng.random_range(0..free.len())]
                }
            })
            .collect();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for &cand in &candidates {
            let updated: Vec<f64> = exec.map_range(n, |i| closest[i].min(sq_dist(row(i), row(cand))));
            let pot: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(b, _, _)| pot < *b) {
                best = Some((pot, cand, updated));
            }
        }
        let (pot, cand, updated) = best.expect("at least one trial");
        centers.push(cand);
        closest = updated;
        potential = pot;
    }
    centers
}

fn kmeans_labels(data: &[f64], dim: usize, k: usize, seed: u64, trials: usize, exec: Exec) -> Vec<usize> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = greedy_init(data, dim, k, trials, &mut rng, exec);
    let mut centroids: Vec<f64> = init.iter().flat_map(|&c| row(c).iter().copied()).collect();
    let mut prev: Option<Vec<usize>> = None;

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut assign: Vec<usize> = exec.map_range(n, |i| {
            let x = row(i);
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(x, &centroids[c * dim..(c + 1) * dim]);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        });
        repair_empty(&mut assign, data, dim, k, &centroids);
        if prev.as_ref() == Some(&assign) {
            break;
        }
        centroids = means(data, dim, k, &assign);
        prev = Some(assign);
    }
    prev.expect("at least one iteration")
}

/// Moves the point farthest from its centroid into each empty cluster,
/// never emptying another cluster.
fn repair_empty(assign: &mut [usize], data: &[f64], dim: usize, k: usize, centroids: &[f64]) {
    let mut sizes = vec![0usize; k];
    assign.iter().for_each(|&c| sizes[c] += 1);
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<(f64, usize)> = None;
        for (i, &c) in assign.iter().enumerate() {
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(&data[i * dim..(i + 1) * dim], &centroids[c * dim..(c + 1) * dim]);
            if far.is_none_or(|(fd, _)| d > fd) {
                far = Some((d, i));
            }
        }
        let (_, p) = far.expect("k <= n leaves a cluster with two members");
        sizes[assign[p]] -= 1;
        assign[p] = empty;
        sizes[empty] = 1;
    }
}

fn means(data: &[f64], dim: usize, k: usize, assign: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for d in 0..dim {
            sums[c * dim + d] += data[i * dim + d];
        }
    }
    for c in 0..k {
        for d in 0..dim {
            sums[c * dim + d] /= counts[c].max(1) as f64;
        }
    }
    sums
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Node ids: leaves are `0..n`, the merge at step `s` creates node `n + s`.
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Full agglomerative merge history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeTree {
    pub month: MonthId,
    pub linkage: Linkage,
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Builds the merge tree with Lance-Williams updates. Average and complete
/// linkage use cosine distance; Ward uses squared Euclidean distance and
/// reports merge heights as its square root.
///
/// Among equal distances the pair with the smallest `(min node, max node)`
/// merges first, so the tree is fully deterministic.
pub fn linkage_tree(model: &EmbeddingModel, linkage: Linkage) -> Result<MergeTree> {
    linkage_tree_with(model, linkage, Exec::default())
}

pub fn linkage_tree_with(model: &EmbeddingModel, linkage: Linkage, exec: Exec) -> Result<MergeTree> {
    let (data, dim) = unit_rows(model)?;
    let n = model.len();
    if n == 0 {
        return Err(Error::invalid("empty model"));
    }
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    // ||x - y||^2 / 2 = 1 - cos(x, y) on the unit sphere.
    let scale = if linkage == Linkage::Ward { 1.0 } else { 0.5 };
    let rows: Vec<Vec<f64>> = exec.map_range(n, |i| ((i + 1)..n).map(|j| scale * sq_dist(row(i), row(j))).collect());
    let mut dist = Condensed {
        n,
        d: rows.into_iter().flatten().collect(),
    };

    let mut active = vec![true; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let key = |dist: &Condensed, node: &[usize], s: usize, t: usize| {
        let (a, b) = (node[s].min(node[t]), node[s].max(node[t]));
        (dist.get(s, t), a, b)
    };
    let less = |x: (f64, usize, usize), y: (f64, usize, usize)| {
        x.0 < y.0 || (x.0 == y.0 && (x.1, x.2) < (y.1, y.2))
    };
    let row_nn = |dist: &Condensed, node: &[usize], active: &[bool], s: usize| -> Option<usize> {
        let mut best: Option<(usize, (f64, usize, usize))> = None;
        for t in 0..n {
            if t == s || !active[t] {
                continue;
            }
            let k = key(dist, node, s, t);
            if best.is_none_or(|(_, bk)| less(k, bk)) {
                best = Some((t, k));
            }
        }
        best.map(|(t, _)| t)
    };

    let mut nn: Vec<Option<usize>> = {
        let (d, nd, a) = (&dist, &node, &active);
        exec.map_range(n, |s| row_nn(d, nd, a, s))
    };
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut pick: Option<(usize, usize, (f64, usize, usize))> = None;
        for s in 0..n {
            if !active[s] {
                continue;
            }
            let t = nn[s].expect("active rows have a neighbor");
            let k = key(&dist, &node, s, t);
            if pick.is_none_or(|(_, _, pk)| less(k, pk)) {
                pick = Some((s, t, k));
            }
        }
        let (s, t, (d_st, a, b)) = pick.expect("two active clusters remain");
        let (keep, gone) = (s.min(t), s.max(t));
        let (ns, nt) = (size[keep] as f64, size[gone] as f64);

        for u in 0..n {
            if !active[u] || u == keep || u == gone {
                continue;
            }
            let (du_s, du_t) = (dist.get(keep, u), dist.get(gone, u));
            let nu = size[u] as f64;
            let merged = match linkage {
                Linkage::Average => (ns * du_s + nt * du_t) / (ns + nt),
                Linkage::Complete => du_s.max(du_t),
                Linkage::Ward => ((ns + nu) * du_s + (nt + nu) * du_t - nu * d_st) / (ns + nt + nu),
            };
            dist.set(keep, u, merged);
        }
        active[gone] = false;
        size[keep] += size[gone];
        node[keep] = n + step;
        merges.push(Merge {
            a,
            b,
            distance: if linkage == Linkage::Ward { d_st.max(0.0).sqrt() } else { d_st },
            size: size[keep],
        });

        nn[gone] = None;
        nn[keep] = row_nn(&dist, &node, &active, keep);
        for u in 0..n {
            if !active[u] || u == keep {
                continue;
            }
            match nn[u] {
                Some(v) if v == keep || v == gone => nn[u] = row_nn(&dist, &node, &active, u),
                Some(v) => {
                    if less(key(&dist, &node, u, keep), key(&dist, &node, u, v)) {
                        nn[u] = Some(keep);
                    }
                }
                None => nn[u] = row_nn(&dist, &node, &active, u),
            }
        }
    }

    Ok(MergeTree {
        month: model.month(),
        linkage,
        leaves: model.vocab().to_vec(),
        merges,
    })
}

impl MergeTree {
    fn labels_after(&self, applied: usize) -> Vec<usize> {
        let n = self.leaves.len();
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (step, m) in self.merges.iter().take(applied).enumerate() {
            let new = n + step;
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            parent[ra] = new;
            parent[rb] = new;
        }
        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        (0..n)
            .map(|leaf| {
                let root = find(&mut parent, leaf);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect()
    }

    /// Leaf labels with `k` clusters, numbered by smallest leaf.
    pub fn cut_labels(&self, k: usize) -> Result<Vec<usize>> {
        check_k(k, self.leaves.len())?;
        Ok(self.labels_after(self.leaves.len() - k))
    }

    /// Leaf labels after applying every merge at or below `max_distance`.
    pub fn cut_at_distance(&self, max_distance: f64) -> Vec<usize> {
        let applied = self.merges.iter().take_while(|m| m.distance <= max_distance).count();
        self.labels_after(applied)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: MergeTree = serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?;
        if t.merges.len() + 1 != t.leaves.len() && !t.leaves.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "merge count must be one less than leaf count".into(),
            });
        }
        Ok(t)
    }
}

pub fn cut_tree(tree: &MergeTree, k: usize) -> Result<Clustering> {
    let labels = tree.cut_labels(k)?;
    Clustering::from_labels(tree.month, tree.linkage.algorithm(), None, &tree.leaves, &labels)
}

pub fn agglomerative(model: &EmbeddingModel, linkage: Linkage, k: usize) -> Result<(Clustering, MergeTree)> {
    check_k(k, model.len())?;
    let tree = linkage_tree(model, linkage)?;
    Ok((cut_tree(&tree, k)?, tree))
}

/// Runs `algorithm` at granularity `k`; the seed only affects k-means++.
pub fn cluster(model: &EmbeddingModel, algorithm: Algorithm, k: usize, seed: u64) -> Result<Clustering> {
    match algorithm.linkage() {
        None => kmeans_pp(model, k, seed, None),
        Some(l) => Ok(agglomerative(model, l, k)?.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::l2_normalize;
    use crate::synthetic;

    fn month() -> MonthId {
        "2021-07".parse().unwrap()
    }

    fn blobs() -> EmbeddingModel {
        l2_normalize(&synthetic::blob_model(2, 8, 4, 0.02, month(), 1)).unwrap()
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn kmeans_extremes() {
        let m = blobs();
        let one = kmeans_pp(&m, 1, 0, None).unwrap();
        assert_eq!(one.sizes(), vec![16]);
        let all = kmeans_pp(&m, 16, 0, None).unwrap();
        assert!(all.sizes().iter().all(|&s| s == 1));
        assert!(kmeans_pp(&m, 0, 0, None).is_err());
        assert!(kmeans_pp(&m, 17, 0, None).is_err());
    }

    #[test]
    fn every_algorithm_recovers_two_blobs() {
        let m = blobs();
        let truth = synthetic::truth_labels(&m);
        for algo in Algorithm::ALL {
            for seed in 0..5 {
                let c = cluster(&m, algo, 2, seed).unwrap();
                let labels = c.labels_for(m.vocab()).unwrap();
                assert!(same_partition(&labels, &truth), "{algo} seed {seed}");
            }
        }
    }

    #[test]
    fn kmeans_is_reproducible() {
        let m = l2_normalize(&synthetic::blob_model(5, 10, 8, 0.3, month(), 4)).unwrap();
        let a = kmeans_pp(&m, 5, 11, None).unwrap();
        let b = kmeans_pp(&m, 5, 11, None).unwrap();
        assert_eq!(a, b);
        let seq = kmeans_pp_with(&m, 5, 11, None, Exec::Sequential).unwrap();
        assert_eq!(a, seq);
    }

    #[test]
    fn kmeans_on_point_masses() {
        // Three distinct points, each repeated; k = 3 must give the masses.
        let rows: Vec<Vec<f32>> = (0..9).map(|i| {
            let mut v = vec![0.0; 3];
            v[i % 3] = 1.0;
            v
        }).collect();
        let names: Vec<String> = (0..9).map(|i| format!("p{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let m = l2_normalize(&EmbeddingModel::from_rows(month(), &refs, &rows).unwrap()).unwrap();
        for seed in 0..10 {
            let labels = kmeans_pp(&m, 3, seed, None).unwrap().labels_for(m.vocab()).unwrap();
            let truth: Vec<usize> = (0..9).map(|i| i % 3).collect();
            assert!(same_partition(&labels, &truth));
        }
        // More clusters than distinct points still yields no empty cluster.
        let c = kmeans_pp(&m, 5, 3, None).unwrap();
        assert_eq!(c.sizes().len(), 5);
        assert!(c.sizes().iter().all(|&s| s > 0));
    }

    fn collinear() -> EmbeddingModel {
        // Unit vectors at angles 0, 0.1, 0.3 rad: c is farthest.
        let rows: Vec<Vec<f32>> = [0.0f32, 0.1, 0.3].iter().map(|t| vec![t.cos(), t.sin()]).collect();
        l2_normalize(&EmbeddingModel::from_rows(month(), &["a", "b", "c"], &rows).unwrap()).unwrap()
    }

    #[test]
    fn complete_linkage_merges_closest_first() {
        let m = collinear();
        let (c, tree) = agglomerative(&m, Linkage::Complete, 2).unwrap();
        assert_eq!((tree.merges[0].a, tree.merges[0].b), (0, 1));
        assert_eq!(c.assignment["a"], c.assignment["b"]);
        assert_ne!(c.assignment["a"], c.assignment["c"]);
        // complete distance of {a,b} to c is 1 - cos(0.3)
        assert!((tree.merges[1].distance - (1.0 - 0.3f64.cos())).abs() < 1e-6);
        let cut = cut_tree(&tree, 2).unwrap();
        assert_eq!(cut.assignment, c.assignment);
        assert_eq!(cut.assignment["a"], 0);
        assert_eq!(cut.assignment["c"], 1);
    }

    #[test]
    fn duplicates_merge_first_at_zero() {
        let rows = vec![vec![0.0f32, 1.0], vec![0.6, 0.8], vec![0.0, 1.0], vec![1.0, 0.0]];
        let names = ["x", "y", "x2", "z"];
        let m = l2_normalize(&EmbeddingModel::from_rows(month(), &names, &rows).unwrap()).unwrap();
        for l in [Linkage::Ward, Linkage::Average, Linkage::Complete] {
            let tree = linkage_tree(&m, l).unwrap();
            assert_eq!((tree.merges[0].a, tree.merges[0].b, tree.merges[0].distance), (0, 2, 0.0));
        }
    }

    #[test]
    fn tree_shape_and_monotone_heights() {
        let m = l2_normalize(&synthetic::blob_model(4, 6, 6, 0.4, month(), 9)).unwrap();
        for l in [Linkage::Ward, Linkage::Average, Linkage::Complete] {
            let tree = linkage_tree(&m, l).unwrap();
            assert_eq!(tree.merges.len(), m.len() - 1);
            assert_eq!(tree.merges.last().unwrap().size, m.len());
            for w in tree.merges.windows(2) {
                assert!(w[1].distance >= w[0].distance - 1e-12, "{l:?}: {} then {}", w[0].distance, w[1].distance);
            }
            let again = linkage_tree_with(&m, l, Exec::Sequential).unwrap();
            assert_eq!(tree, again);
            for k in 1..=m.len() {
                let c = cut_tree(&tree, k).unwrap();
                assert_eq!(c.k, k);
                assert!(c.sizes().iter().all(|&s| s > 0));
            }
            let all = cut_tree(&tree, m.len()).unwrap();
            assert!(all.sizes().iter().all(|&s| s == 1));
            assert!(cut_tree(&tree, 0).is_err());
        }
    }

    /// Naive O(n^3) agglomeration recomputing linkage distances from the
    /// member lists.
    fn naive_merges(data: &[Vec<f64>], linkage: Linkage) -> Vec<(Vec<usize>, f64)> {
        let mut clusters: Vec<Vec<usize>> = (0..data.len()).map(|i| vec![i]).collect();
        let d = |i: usize, j: usize| -> f64 {
            let s: f64 = data[i].iter().zip(&data[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            s / 2.0
        };
        let mut out = Vec::new();
        while clusters.len() > 1 {
            let mut best = (f64::INFINITY, 0, 0);
            for x in 0..clusters.len() {
                for y in (x + 1)..clusters.len() {
                    let (cx, cy) = (&clusters[x], &clusters[y]);
                    let v = match linkage {
                        Linkage::Complete => cx.iter().flat_map(|&i| cy.iter().map(move |&j| d(i, j))).fold(0.0, f64::max),
                        Linkage::Average => {
                            cx.iter().flat_map(|&i| cy.iter().map(move |&j| d(i, j))).sum::<f64>()
                                / (cx.len() * cy.len()) as f64
                        }
                        Linkage::Ward => {
                            let dim = data[0].len();
                            let mean = |c: &Vec<usize>| -> Vec<f64> {
                                (0..dim).map(|k| c.iter().map(|&i| data[i][k]).sum::<f64>() / c.len() as f64).collect()
                            };
                            let (mx, my) = (mean(cx), mean(cy));
                            let gap: f64 = mx.iter().zip(&my).map(|(a, b)| (a - b) * (a - b)).sum();
                            (2.0 * (cx.len() * cy.len()) as f64 / (cx.len() + cy.len()) as f64 * gap).sqrt()
                        }
                    };
                    if v < best.0 - 1e-12 {
                        best = (v, x, y);
                    }
                }
            }
            let (v, x, y) = best;
            let merged: Vec<usize> = {
                let mut m = clusters[x].clone();
                m.extend(&clusters[y]);
                m.sort();
                m
            };
            clusters.remove(y);
            clusters[x] = merged.clone();
            out.push((merged, v));
        }
        out
    }

    #[test]
    fn lance_williams_matches_naive_recomputation() {
        let m = l2_normalize(&synthetic::blob_model(3, 5, 4, 0.5, month(), 21)).unwrap();
        let data: Vec<Vec<f64>> = m
            .vectors()
            .rows()
            .into_iter()
            .map(|r| {
                let n = r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                r.iter().map(|&x| x as f64 / n).collect()
            })
            .collect();
        for l in [Linkage::Ward, Linkage::Average, Linkage::Complete] {
            let tree = linkage_tree(&m, l).unwrap();
            let naive = naive_merges(&data, l);
            let n = m.len();
            let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            for (step, merge) in tree.merges.iter().enumerate() {
                let mut set = members[merge.a].clone();
                set.extend(&members[merge.b]);
                set.sort();
                members.push(set.clone());
                assert_eq!(set, naive[step].0, "{l:?} step {step}");
                assert!((merge.distance - naive[step].1).abs() < 1e-9, "{l:?} step {step}");
            }
        }
    }

    #[test]
    fn distance_cut() {
        let m = collinear();
        let tree = linkage_tree(&m, Linkage::Average).unwrap();
        assert_eq!(tree.cut_at_distance(-1.0), vec![0, 1, 2]);
        assert_eq!(tree.cut_at_distance(f64::INFINITY), vec![0, 0, 0]);
        let first = tree.merges[0].distance;
        assert_eq!(tree.cut_at_distance(first), vec![0, 0, 1]);
    }

    #[test]
    fn clustering_files_round_trip() {
        let m = blobs();
        let c = kmeans_pp(&m, 2, 4, None).unwrap();
        assert_eq!(c.file_name(), "clusters_kmeanspp_2.json");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(c.file_name());
        c.save(&p).unwrap();
        assert_eq!(Clustering::load(&p).unwrap(), c);
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        assert_eq!(v["algorithm"], "kmeanspp");
        assert_eq!(v["month"], "2021-07");
    }

    #[test]
    fn requires_normalized_model() {
        let m = synthetic::blob_model(2, 3, 2, 0.1, month(), 0);
        assert!(matches!(kmeans_pp(&m, 2, 0, None), Err(Error::NotNormalized)));
        assert!(matches!(linkage_tree(&m, Linkage::Ward), Err(Error::NotNormalized)));
    }
}
