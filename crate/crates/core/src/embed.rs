//! Skip-gram with negative sampling over user contexts.
//!
//! Every user context is an "infinite window": each surviving comment is a
//! center whose positive targets are all other surviving comments of the
//! same user. Negatives come from the unigram distribution raised to 3/4.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::analogy::{self, AnalogySet, PrecisionReport};
use crate::ingest::SnapshotCorpus;
use crate::{Error, MonthId, Result};

/// Exponent applied to unigram counts for the negative-sampling distribution.
pub const NOISE_EXPONENT: f64 = 0.75;

/// Learning-rate floor as a fraction of the initial rate.
const LR_FLOOR: f32 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::negative")]
    pub negative: usize,
    #[serde(default)]
    pub downsample: f64,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f32,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::workers")]
    pub workers: usize,
}

mod defaults {
    pub fn dim() -> usize {
        100
    }
    pub fn negative() -> usize {
        10
    }
    pub fn learning_rate() -> f32 {
        0.05
    }
    pub fn epochs() -> usize {
        5
    }
    pub fn workers() -> usize {
        1
    }
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            dim: defaults::dim(),
            negative: defaults::negative(),
            downsample: 0.0,
            learning_rate: defaults::learning_rate(),
            epochs: defaults::epochs(),
            seed: 0,
            workers: defaults::workers(),
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        if self.negative == 0 {
            return Err(Error::invalid("negative samples must be at least 1"));
        }
        if !(self.downsample >= 0.0) {
            return Err(Error::invalid("downsample threshold must be non-negative"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        Ok(())
    }
}

/// The 2 x 3 x 2 grid over negatives, downsampling threshold and learning
/// rate, with every other field taken from `base`.
pub fn default_grid(base: &TrainParams) -> Vec<TrainParams> {
    let mut grid = Vec::with_capacity(12);
    for negative in [10, 20] {
        for downsample in [0.0, 0.001, 0.005] {
            for learning_rate in [0.05, 0.08] {
                grid.push(TrainParams {
                    negative,
                    downsample,
                    learning_rate,
                    ..base.clone()
                });
            }
        }
    }
    grid
}

/// Per-month subreddit vectors.
#[derive(Clone, Debug)]
pub struct EmbeddingModel {
    month: MonthId,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f32>,
    params: TrainParams,
    normalized: bool,
}

impl PartialEq for EmbeddingModel {
    fn eq(&self, other: &Self) -> bool {
        self.month == other.month
            && self.vocab == other.vocab
            && self.vectors == other.vectors
            && self.params == other.params
            && self.normalized == other.normalized
    }
}

#[derive(Serialize, Deserialize)]
struct ModelSidecar {
    month: MonthId,
    vocab: Vec<String>,
    dim: usize,
    params: TrainParams,
    normalized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub name: String,
    pub similarity: f64,
}

impl EmbeddingModel {
    pub fn from_parts(
        month: MonthId,
        vocab: Vec<String>,
        vectors: Array2<f32>,
        params: TrainParams,
        normalized: bool,
    ) -> Result<Self> {
        if vectors.nrows() != vocab.len() {
            return Err(Error::invalid(format!(
                "{} rows for {} vocabulary entries",
                vectors.nrows(),
                vocab.len()
            )));
        }
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(Error::invalid("duplicate vocabulary entries"));
        }
        if normalized {
            for (i, row) in vectors.rows().into_iter().enumerate() {
                let norm = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-5 {
                    return Err(Error::invalid(format!("row {} has norm {norm}, expected 1", vocab[i])));
                }
            }
        }
        Ok(Self {
            month,
            vocab,
            index,
            vectors,
            params,
            normalized,
        })
    }

    /// Convenience constructor for hand-built models: rows are given as slices.
    pub fn from_rows(month: MonthId, names: &[&str], rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("ragged rows"));
        }
        let flat: Vec<f32> = rows.iter().flatten().copied().collect();
        let vectors = Array2::from_shape_vec((rows.len(), dim), flat).map_err(|e| Error::invalid(e.to_string()))?;
        let params = TrainParams {
            dim: dim.max(1),
            ..TrainParams::default()
        };
        Self::from_parts(month, names.iter().map(|s| s.to_string()).collect(), vectors, params, false)
    }

    pub fn month(&self) -> MonthId {
        self.month
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn vectors(&self) -> ArrayView2<'_, f32> {
        self.vectors.view()
    }

    pub fn vector(&self, name: &str) -> Option<ArrayView1<'_, f32>> {
        self.index_of(name).map(|i| self.vectors.row(i))
    }

    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Every vector multiplied by `factor`. Clears the normalized flag.
    pub fn scaled(&self, factor: f32) -> Self {
        let mut m = self.clone();
        m.vectors.mapv_inplace(|x| x * factor);
        m.normalized = false;
        m
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut bytes = Vec::with_capacity(self.vectors.len() * 4);
        for &x in self.vectors.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let path = dir.join("vectors.f32");
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let sidecar = ModelSidecar {
            month: self.month,
            vocab: self.vocab.clone(),
            dim: self.dim(),
            params: self.params.clone(),
            normalized: self.normalized,
        };
        let path = dir.join("model.json");
        fs::write(&path, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("model.json");
        let sidecar: ModelSidecar = serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        let path = dir.join("vectors.f32");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = sidecar.vocab.len() * sidecar.dim * 4;
        if bytes.len() != expected {
            return Err(Error::Format {
                path,
                message: format!("{} bytes, expected {expected}", bytes.len()),
            });
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let vectors = Array2::from_shape_vec((sidecar.vocab.len(), sidecar.dim), data)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::from_parts(sidecar.month, sidecar.vocab, vectors, sidecar.params, sidecar.normalized)
    }

    /// Cosine similarity of every row against `target`, which must be unit length.
    pub(crate) fn dots(&self, target: &[f64]) -> Vec<f64> {
        self.vectors
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(target).map(|(&x, &t)| x as f64 * t).sum())
            .collect()
    }

    /// The `n` most similar subreddits to `name`, excluding itself.
    /// Ties keep vocabulary order.
    pub fn nearest_neighbors(&self, name: &str, n: usize) -> Result<Vec<Neighbor>> {
        if !self.normalized {
            return Err(Error::NotNormalized);
        }
        let q = self.index_of(name).ok_or_else(|| Error::UnknownSubreddit(name.to_string()))?;
        let target: Vec<f64> = self.vectors.row(q).iter().map(|&x| x as f64).collect();
        let sims = self.dots(&target);
        Ok(self.top_ranked(&sims, n, |i| i == q))
    }

    pub(crate) fn top_ranked(&self, sims: &[f64], n: usize, exclude: impl Fn(usize) -> bool) -> Vec<Neighbor> {
        let mut order: Vec<usize> = (0..sims.len()).filter(|&i| !exclude(i)).collect();
        let cmp = |a: &usize, b: &usize| sims[*b].total_cmp(&sims[*a]).then(a.cmp(b));
        if n < order.len() {
            order.select_nth_unstable_by(n, cmp);
            order.truncate(n);
        }
        order.sort_by(cmp);
        order
            .into_iter()
            .map(|i| Neighbor {
                name: self.vocab[i].clone(),
                similarity: sims[i],
            })
            .collect()
    }
}

/// Rows scaled to unit L2 norm. Idempotent.
pub fn l2_normalize(model: &EmbeddingModel) -> Result<EmbeddingModel> {
    let mut out = model.clone();
    if model.normalized {
        return Ok(out);
    }
    for (i, mut row) in out.vectors.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector(model.vocab[i].clone()));
        }
        row.mapv_inplace(|x| (x as f64 / norm) as f32);
    }
    out.normalized = true;
    Ok(out)
}

/// Probability of keeping one occurrence of a subreddit with relative
/// frequency `f`; `t = 0` disables downsampling.
pub fn downsample_keep_prob(f: f64, t: f64) -> f64 {
    if t <= 0.0 || f <= 0.0 {
        return 1.0;
    }
    (t / f).sqrt().min(1.0)
}

/// Unigram^0.75 sampler over vocabulary indices.
pub struct NoiseSampler {
    alias: Option<WeightedAliasIndex<f64>>,
    probs: Vec<f64>,
}

impl NoiseSampler {
    pub fn new(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(NOISE_EXPONENT)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::UntrainableCorpus);
        }
        let probs = weights.iter().map(|w| w / total).collect();
        let alias = if counts.len() > 1 {
            Some(WeightedAliasIndex::new(weights).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { alias, probs })
    }

    /// Target probability of each index.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.alias {
            Some(a) => a.sample(rng),
            None => 0,
        }
    }
}

/// f32 matrix shared between training workers. Updates are relaxed
/// load/store pairs: concurrent writers may lose updates, never tear them.
struct SharedRows {
    data: Vec<AtomicU32>,
    dim: usize,
}

impl SharedRows {
    fn from_fn(rows: usize, dim: usize, mut f: impl FnMut() -> f32) -> Self {
        Self {
            data: (0..rows * dim).map(|_| AtomicU32::new(f().to_bits())).collect(),
            dim,
        }
    }

    #[inline]
    fn load(&self, row: usize, out: &mut [f32]) {
        let base = row * self.dim;
        for (o, a) in out.iter_mut().zip(&self.data[base..base + self.dim]) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    #[inline]
    fn store(&self, row: usize, v: &[f32]) {
        let base = row * self.dim;
        for (x, a) in v.iter().zip(&self.data[base..base + self.dim]) {
            a.store(x.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_array(self, rows: usize) -> Array2<f32> {
        let data: Vec<f32> = self.data.into_iter().map(|a| f32::from_bits(a.into_inner())).collect();
        Array2::from_shape_vec((rows, self.dim), data).expect("shape matches")
    }
}

struct Trainer<'a> {
    params: &'a TrainParams,
    input: SharedRows,
    output: SharedRows,
    keep: Vec<f64>,
    noise: NoiseSampler,
    progress: AtomicU64,
    total_pairs: u64,
}

fn stream_seed(seed: u64, epoch: usize, worker: usize) -> u64 {
    // splitmix64 over the triple
    let mut z = seed
        .wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((worker as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Trainer<'_> {
    fn learning_rate(&self) -> f32 {
        let done = self.progress.load(Ordering::Relaxed) as f64 / self.total_pairs.max(1) as f64;
        let frac = (1.0 - done as f32).max(LR_FLOOR);
        self.params.learning_rate * frac
    }

    fn run_shard(&self, contexts: &[crate::ingest::UserContext], rng: &mut ChaCha8Rng) {
        let dim = self.params.dim;
        let mut center = vec![0f32; dim];
        let mut grad = vec![0f32; dim];
        let mut out_row = vec![0f32; dim];
        let mut tokens: Vec<usize> = Vec::new();

        for ctx in contexts {
            tokens.clear();
            let raw = ctx.len();
            for &(idx, count) in &ctx.tokens {
                let keep = self.keep[idx as usize];
                for _ in 0..count {
                    if keep >= 1.0 || rng.random::<f64>() < keep {
                        tokens.push(idx as usize);
                    }
                }
            }
            let per_center = raw.saturating_sub(1);
            if tokens.len() < 2 {
                self.progress.fetch_add(raw * per_center, Ordering::Relaxed);
                continue;
            }
            let stride = (raw * per_center) / tokens.len() as u64;
            for (i, &c) in tokens.iter().enumerate() {
                let lr = self.learning_rate();
                self.input.load(c, &mut center);
                for (j, &target) in tokens.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    self.update(&center, &mut grad, &mut out_row, target, 1.0, lr);
                    for _ in 0..self.params.negative {
                        let Some(neg) = self.draw_negative(target, rng) else { break };
                        self.update(&center, &mut grad, &mut out_row, neg, 0.0, lr);
                    }
                    center.iter_mut().zip(&grad).for_each(|(h, g)| *h += g);
                }
                self.input.store(c, &center);
                self.progress.fetch_add(stride, Ordering::Relaxed);
            }
        }
    }

    #[inline]
    fn draw_negative(&self, target: usize, rng: &mut ChaCha8Rng) -> Option<usize> {
        if self.keep.len() < 2 {
            return None;
        }
        loop {
            let neg = self.noise.sample(rng);
            if neg != target {
                return Some(neg);
            }
        }
    }

    /// One logistic step for (center, word, label); accumulates the center
    /// gradient into `grad` and updates the output row in place.
    #[inline]
    fn update(&self, center: &[f32], grad: &mut [f32], out_row: &mut [f32], word: usize, label: f32, lr: f32) {
        self.output.load(word, out_row);
        let g = (label - sigmoid(dot(center, out_row))) * lr;
        for ((gr, o), &h) in grad.iter_mut().zip(out_row.iter_mut()).zip(center) {
            *gr += g * *o;
            *o += g * h;
        }
        self.output.store(word, out_row);
    }
}

/// Trains input vectors for every vocabulary entry of `corpus`.
///
/// With `workers == 1` the result is a pure function of corpus and params.
/// More workers shard users and update the shared matrices without locks.
pub fn train_sgns(corpus: &SnapshotCorpus, params: &TrainParams) -> Result<EmbeddingModel> {
    params.validate()?;
    if !corpus.contexts().iter().any(|c| c.len() >= 2) {
        return Err(Error::UntrainableCorpus);
    }
    let vocab = corpus.vocab();
    let counts: Vec<u64> = vocab.iter().map(|(_, c)| *c).collect();
    let total: u64 = counts.iter().sum();
    let keep = counts
        .iter()
        .map(|&c| downsample_keep_prob(c as f64 / total as f64, params.downsample))
        .collect();
    let noise = NoiseSampler::new(&counts)?;

    let dim = params.dim;
    let mut init_rng = ChaCha8Rng::seed_from_u64(stream_seed(params.seed, usize::MAX, 0));
    let input = SharedRows::from_fn(vocab.len(), dim, || (init_rng.random::<f32>() - 0.5) / dim as f32);
    let output = SharedRows::from_fn(vocab.len(), dim, || 0.0);

    let pairs_per_epoch: u64 = corpus
        .contexts()
        .iter()
        .map(|c| {
            let n = c.len();
            n * n.saturating_sub(1)
        })
        .sum();
    let trainer = Trainer {
        params,
        input,
        output,
        keep,
        noise,
        progress: AtomicU64::new(0),
        total_pairs: pairs_per_epoch * params.epochs as u64,
    };

    let contexts = corpus.contexts();
    let workers = params.workers.min(contexts.len()).max(1);
    let shard_len = contexts.len().div_ceil(workers);
    for epoch in 0..params.epochs {
        if workers == 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(params.seed, epoch, 0));
            trainer.run_shard(contexts, &mut rng);
        } else {
            std::thread::scope(|scope| {
                for (w, shard) in contexts.chunks(shard_len).enumerate() {
                    let trainer = &trainer;
                    scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(params.seed, epoch, w));
                        trainer.run_shard(shard, &mut rng);
                    });
                }
            });
        }
    }

    let vectors = trainer.input.into_array(vocab.len());
    EmbeddingModel::from_parts(
        corpus.month(),
        vocab.iter().map(|(s, _)| s.clone()).collect(),
        vectors,
        params.clone(),
        false,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub params: TrainParams,
    pub precision: PrecisionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub month: MonthId,
    pub k: usize,
    pub entries: Vec<GridEntry>,
    pub best: usize,
    /// Set when no configuration had a defined score and the first entry was kept.
    pub fallback: bool,
}

/// Trains every configuration and keeps the one with the highest P@5 on
/// normalized vectors. Ties prefer fewer negatives, then the lower learning
/// rate, then the lower downsampling threshold, then grid order.
///
/// Returns the winning model already L2-normalized.
pub fn grid_search(
    corpus: &SnapshotCorpus,
    grid: &[TrainParams],
    analogies: &AnalogySet,
) -> Result<(EmbeddingModel, GridReport)> {
    const K: usize = 5;
    if grid.is_empty() {
        return Err(Error::invalid("empty parameter grid"));
    }
    let queries = analogy::generate_queries(analogies);
    let mut models = Vec::with_capacity(grid.len());
    let mut entries = Vec::with_capacity(grid.len());
    for params in grid {
        let model = l2_normalize(&train_sgns(corpus, params)?)?;
        let precision = analogy::precision_at_k(&model, &queries, K)?;
        entries.push(GridEntry {
            params: params.clone(),
            precision,
        });
        models.push(model);
    }

    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        let Some(score) = e.precision.overall else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let (bs, bp) = (entries[b].precision.overall.unwrap(), &entries[b].params);
                let p = &e.params;
                score > bs
                    || (score == bs
                        && (p.negative, p.learning_rate, p.downsample) < (bp.negative, bp.learning_rate, bp.downsample))
            }
        };
        if better {
            best = Some(i);
        }
    }
    let fallback = best.is_none();
    let best = best.unwrap_or(0);
    let model = models.swap_remove(best);
    Ok((
        model,
        GridReport {
            month: corpus.month(),
            k: K,
            entries,
            best,
            fallback,
        },
    ))
}
