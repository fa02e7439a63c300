//! End-to-end pipeline: per-month snapshot, training, clustering and
//! exports, then cross-month analyses.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use commap::analogy::{load_pairs, AnalogySet};
use commap::cluster::{cut_tree, kmeans_pp_with, linkage_tree_with, Clustering};
use commap::embed::{grid_search, EmbeddingModel, Neighbor};
use commap::ingest::{build_snapshot, parse_dump_path};
use commap::layout::layout2d;
use commap::metrics::evaluate;
use commap::temporal::{nn_stability, vi_across_models, vi_across_months};
use commap::{Exec, MonthId};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    clusters_file, file_sha256, merges_file, metrics_file, month_dir, neighbors_file, read_json, sha256_hex,
    vi_file, vi_models_file, write_json, MonthManifest, CROSS_DIR, MANIFEST, RUN_REPORT,
};
use crate::config::{ClusterRequest, PipelineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonthStatus {
    Built,
    Cached,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthReport {
    pub month: MonthId,
    pub status: MonthStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_at_5: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossReport {
    pub months: Vec<MonthId>,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub months: Vec<MonthReport>,
    pub cross: CrossReport,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.cross.error.is_none() && self.months.iter().all(|m| m.status != MonthStatus::Failed)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Rebuild months even when their stamp matches.
    pub force: bool,
    pub exec: Exec,
}

struct StageError {
    stage: &'static str,
    error: anyhow::Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, error: e.into() })
    }
}

/// Everything a month's artifacts depend on.
#[derive(Serialize)]
struct MonthPlan<'a> {
    tool: &'static str,
    month: MonthId,
    input_sha256: String,
    analogies_sha256: &'a str,
    filter: commap::ingest::FilterConfig,
    grid: Vec<commap::embed::TrainParams>,
    clusterings: &'a [ClusterRequest],
    cluster_seed: u64,
    neighbors: usize,
}

fn month_stamp(cfg: &PipelineConfig, month: MonthId, input: &Path, analogies_sha: &str) -> anyhow::Result<String> {
    let plan = MonthPlan {
        tool: env!("CARGO_PKG_VERSION"),
        month,
        input_sha256: file_sha256(input)?,
        analogies_sha256: analogies_sha,
        filter: cfg.filter.for_month(month),
        grid: cfg.grid(),
        clusterings: &cfg.clusterings,
        cluster_seed: cfg.cluster_seed,
        neighbors: cfg.neighbors,
    };
    Ok(sha256_hex(&serde_json::to_vec(&plan)?))
}

/// Runs every configured month, then the cross-month analyses over the
/// months that completed. Stage failures are recorded in the report; only
/// unusable configuration or an unwritable root is an error.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> anyhow::Result<RunReport> {
    cfg.validate()?;
    let analogies = load_pairs(&cfg.analogies)?;
    let analogies_sha = file_sha256(&cfg.analogies)?;
    let root = &cfg.artifact_root;
    fs::create_dir_all(root.join(crate::artifacts::MONTHS_DIR))
        .with_context(|| format!("creating {}", root.display()))?;

    let months = opts.exec.map(&cfg.months, |&m| run_month(cfg, m, &analogies, &analogies_sha, opts));
    let done: Vec<MonthId> = months
        .iter()
        .filter(|r| r.status != MonthStatus::Failed)
        .map(|r| r.month)
        .collect();
    let cross = run_cross(cfg, &done, opts.exec);
    let mut months = months;
    months.sort_by_key(|r| r.month);
    let report = RunReport {
        config_hash: sha256_hex(&serde_json::to_vec(cfg)?),
        months,
        cross,
    };
    write_json(&root.join(RUN_REPORT), &report)?;
    Ok(report)
}

fn failed(month: MonthId, e: StageError) -> MonthReport {
    MonthReport {
        month,
        status: MonthStatus::Failed,
        stage: Some(e.stage.to_string()),
        error: Some(format!("{:#}", e.error)),
        p_at_5: None,
    }
}

fn run_month(cfg: &PipelineConfig, month: MonthId, analogies: &AnalogySet, analogies_sha: &str, opts: RunOptions) -> MonthReport {
    let prepare = || -> Result<(PathBuf, String), StageError> {
        let input = cfg.input_for(month).stage("ingest")?;
        let stamp = month_stamp(cfg, month, &input, analogies_sha).stage("ingest")?;
        Ok((input, stamp))
    };
    let (input, stamp) = match prepare() {
        Ok(v) => v,
        Err(e) => return failed(month, e),
    };
    let dir = month_dir(&cfg.artifact_root, month);
    if !opts.force {
        if let Ok(m) = read_json::<MonthManifest>(&dir.join(MANIFEST)) {
            if m.stamp == stamp {
                return MonthReport {
                    month,
                    status: MonthStatus::Cached,
                    stage: None,
                    error: None,
                    p_at_5: m.p_at_5,
                };
            }
        }
    }
    let staging = dir.with_file_name(format!(".{month}.partial"));
    let result = build_month(cfg, month, &input, &stamp, analogies, &staging, opts.exec).and_then(|manifest| {
        if dir.exists() {
            fs::remove_dir_all(&dir).stage("export")?;
        }
        fs::rename(&staging, &dir).stage("export")?;
        Ok(manifest)
    });
    match result {
        Ok(manifest) => MonthReport {
            month,
            status: MonthStatus::Built,
            stage: None,
            error: None,
            p_at_5: manifest.p_at_5,
        },
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            failed(month, e)
        }
    }
}

fn build_month(
    cfg: &PipelineConfig,
    month: MonthId,
    input: &Path,
    stamp: &str,
    analogies: &AnalogySet,
    out: &Path,
    exec: Exec,
) -> Result<MonthManifest, StageError> {
    if out.exists() {
        fs::remove_dir_all(out).stage("ingest")?;
    }
    fs::create_dir_all(out).stage("ingest")?;

    let dump = parse_dump_path(input, month).stage("ingest")?;
    let corpus = build_snapshot(&dump.records, &cfg.filter.for_month(month)).stage("ingest")?;
    corpus.write_dir(&out.join("snapshot")).stage("ingest")?;
    drop(dump);

    let (model, grid) = grid_search(&corpus, &cfg.grid(), analogies).stage("train")?;
    model.save(&out.join("model")).stage("train")?;
    write_json(&out.join("grid.json"), &grid).stage("train")?;

    let best = &grid.entries[grid.best];
    write_json(&out.join("analogies.json"), &best.precision).stage("analogies")?;
    let csv = fs::File::create(out.join("analogies.csv")).stage("analogies")?;
    best.precision.write_csv(month, csv).stage("analogies")?;

    for c in cluster_all(&model, &cfg.clusterings, cfg.cluster_seed, out, exec).stage("cluster")? {
        let metrics = evaluate(&model, &c).stage("metrics")?;
        write_json(&out.join(metrics_file(c.algorithm, c.k)), &metrics).stage("metrics")?;
    }

    let neighbors = all_neighbors(&model, cfg.neighbors, exec).stage("neighbors")?;
    write_json(&out.join(neighbors_file(cfg.neighbors)), &neighbors).stage("neighbors")?;

    layout2d(&model).stage("layout")?.save(&out.join("layout2d.json")).stage("layout")?;

    let manifest = MonthManifest {
        month,
        stamp: stamp.to_string(),
        best_params: best.params.clone(),
        p_at_5: best.precision.overall,
        vocab_size: model.len(),
        clusterings: cfg.clusterings.clone(),
        neighbors: cfg.neighbors,
    };
    write_json(&out.join(MANIFEST), &manifest).stage("export")?;
    Ok(manifest)
}

/// Runs the requested clusterings, building each hierarchical tree once
/// and cutting it at every requested k.
fn cluster_all(
    model: &EmbeddingModel,
    requests: &[ClusterRequest],
    seed: u64,
    out: &Path,
    exec: Exec,
) -> anyhow::Result<Vec<Clustering>> {
    let mut trees = BTreeMap::new();
    let mut result = Vec::new();
    for req in requests {
        let c = match req.algorithm.linkage() {
            None => kmeans_pp_with(model, req.k, seed, None, exec)?,
            Some(linkage) => {
                if !trees.contains_key(&req.algorithm) {
                    let tree = linkage_tree_with(model, linkage, exec)?;
                    tree.save(&out.join(merges_file(req.algorithm)))?;
                    trees.insert(req.algorithm, tree);
                }
                cut_tree(&trees[&req.algorithm], req.k)?
            }
        };
        c.save(&out.join(clusters_file(req.algorithm, req.k)))?;
        result.push(c);
    }
    Ok(result)
}

/// Top-`n` neighbors of every subreddit, keyed by name.
pub fn all_neighbors(model: &EmbeddingModel, n: usize, exec: Exec) -> anyhow::Result<BTreeMap<String, Vec<Neighbor>>> {
    let lists = exec.map(model.vocab(), |name| model.nearest_neighbors(name, n));
    model
        .vocab()
        .iter()
        .cloned()
        .zip(lists)
        .map(|(name, l)| Ok((name, l?)))
        .collect()
}

fn run_cross(cfg: &PipelineConfig, months: &[MonthId], exec: Exec) -> CrossReport {
    let dir = cfg.artifact_root.join(CROSS_DIR);
    let mut report = CrossReport {
        months: months.to_vec(),
        ..Default::default()
    };
    let result = (|| -> anyhow::Result<Vec<String>> {
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        if months.len() < 2 {
            return Ok(Vec::new());
        }
        fs::create_dir_all(&dir)?;
        cross_month(cfg, months, &dir, exec)
    })();
    match result {
        Ok(files) => report.files = files,
        Err(e) => report.error = Some(format!("{e:#}")),
    }
    report
}

fn cross_month(cfg: &PipelineConfig, months: &[MonthId], dir: &Path, exec: Exec) -> anyhow::Result<Vec<String>> {
    let root = &cfg.artifact_root;
    let mut files = Vec::new();
    let mut models = Vec::new();
    let mut popularity: BTreeMap<String, u64> = BTreeMap::new();
    for &m in months {
        let mdir = month_dir(root, m);
        models.push(EmbeddingModel::load(&mdir.join("model"))?);
        let vocab: BTreeMap<String, u64> = read_json(&mdir.join("snapshot/vocab.json"))?;
        for (name, count) in vocab {
            *popularity.entry(name).or_default() += count;
        }
    }
    let stability = nn_stability(&models, cfg.neighbors, &popularity, exec)?;
    stability.save(&dir.join("stability.json"))?;
    stability.write_csv(fs::File::create(dir.join("stability.csv"))?)?;
    files.extend(["stability.json".to_string(), "stability.csv".to_string()]);
    drop(models);

    let mut by_request: BTreeMap<ClusterRequest, Vec<Clustering>> = BTreeMap::new();
    for &m in months {
        for req in &cfg.clusterings {
            let path = month_dir(root, m).join(clusters_file(req.algorithm, req.k));
            by_request.entry(*req).or_default().push(Clustering::load(&path)?);
        }
    }
    for (req, series) in &by_request {
        let matrix = vi_across_months(series, exec)?;
        let stem = vi_file(req.algorithm, req.k);
        matrix.save(&dir.join(format!("{stem}.json")))?;
        matrix.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        files.extend([format!("{stem}.json"), format!("{stem}.csv")]);
    }
    let mut by_k: BTreeMap<usize, Vec<(String, Vec<Clustering>)>> = BTreeMap::new();
    for (req, series) in by_request {
        by_k.entry(req.k).or_default().push((req.algorithm.to_string(), series));
    }
    for (k, series) in by_k.into_iter().filter(|(_, s)| s.len() >= 2) {
        let matrix = vi_across_models(&series, exec)?;
        let stem = vi_models_file(k);
        matrix.save(&dir.join(format!("{stem}.json")))?;
        matrix.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        files.extend([format!("{stem}.json"), format!("{stem}.csv")]);
    }
    Ok(files)
}

/// Loads the run report of an artifact tree.
pub fn read_report(root: &Path) -> anyhow::Result<RunReport> {
    read_json(&root.join(RUN_REPORT)).map_err(|e| anyhow!("no run report under {}: {e:#}", root.display()))
}
