//! Artifact tree layout.
//!
//! ```text
//! <root>/run_report.json
//! <root>/months/<YYYY-MM>/month.json            manifest and cache stamp
//! <root>/months/<YYYY-MM>/snapshot/             vocab.json, contexts.bin, stats.json
//! <root>/months/<YYYY-MM>/model/                vectors.f32, model.json
//! <root>/months/<YYYY-MM>/grid.json
//! <root>/months/<YYYY-MM>/analogies.{json,csv}
//! <root>/months/<YYYY-MM>/clusters_<algo>_<k>.json
//! <root>/months/<YYYY-MM>/merges_<algo>.json    hierarchical algorithms only
//! <root>/months/<YYYY-MM>/metrics_<algo>_<k>.json
//! <root>/months/<YYYY-MM>/neighbors_top<n>.json
//! <root>/months/<YYYY-MM>/layout2d.json
//! <root>/cross/stability.{json,csv}             two or more months
//! <root>/cross/vi_<algo>_<k>.{json,csv}
//! <root>/cross/vi_models_<k>.{json,csv}         two or more algorithms at one k
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use commap::cluster::{Algorithm, Clustering};
use commap::embed::{Neighbor, TrainParams};
use commap::layout::Layout;
use commap::metrics::ClusterMetrics;
use commap::MonthId;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ClusterRequest;

pub const MONTHS_DIR: &str = "months";
pub const CROSS_DIR: &str = "cross";
pub const RUN_REPORT: &str = "run_report.json";
pub const MANIFEST: &str = "month.json";

pub fn month_dir(root: &Path, month: MonthId) -> PathBuf {
    root.join(MONTHS_DIR).join(month.to_string())
}

pub fn clusters_file(algorithm: Algorithm, k: usize) -> String {
    format!("clusters_{algorithm}_{k}.json")
}

pub fn metrics_file(algorithm: Algorithm, k: usize) -> String {
    format!("metrics_{algorithm}_{k}.json")
}

pub fn merges_file(algorithm: Algorithm) -> String {
    format!("merges_{algorithm}.json")
}

pub fn neighbors_file(n: usize) -> String {
    format!("neighbors_top{n}.json")
}

pub fn vi_file(algorithm: Algorithm, k: usize) -> String {
    format!("vi_{algorithm}_{k}")
}

pub fn vi_models_file(k: usize) -> String {
    format!("vi_models_{k}")
}

/// Written last into a month directory; its presence marks the month
/// complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthManifest {
    pub month: MonthId,
    /// Hash of everything the month's artifacts depend on.
    pub stamp: String,
    pub best_params: TrainParams,
    pub p_at_5: Option<f64>,
    pub vocab_size: usize,
    pub clusterings: Vec<ClusterRequest>,
    pub neighbors: usize,
}

/// Everything served for one month, loaded from its directory.
#[derive(Clone, Debug)]
pub struct MonthArtifacts {
    pub manifest: MonthManifest,
    pub clusterings: BTreeMap<ClusterRequest, Clustering>,
    pub metrics: BTreeMap<ClusterRequest, ClusterMetrics>,
    pub neighbors: BTreeMap<String, Vec<Neighbor>>,
    pub layout: Layout,
}

impl MonthArtifacts {
    /// Loads a complete month directory and checks that every file covers
    /// the same vocabulary.
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let manifest: MonthManifest = read_json(&dir.join(MANIFEST))?;
        let mut clusterings = BTreeMap::new();
        let mut metrics = BTreeMap::new();
        for req in &manifest.clusterings {
            let c = Clustering::load(&dir.join(clusters_file(req.algorithm, req.k)))?;
            clusterings.insert(*req, c);
            metrics.insert(*req, read_json(&dir.join(metrics_file(req.algorithm, req.k)))?);
        }
        let neighbors: BTreeMap<String, Vec<Neighbor>> = read_json(&dir.join(neighbors_file(manifest.neighbors)))?;
        let layout = Layout::load(&dir.join("layout2d.json"))?;
        let vocab: BTreeSet<&str> = neighbors.keys().map(String::as_str).collect();
        let layout_names: BTreeSet<&str> = layout.points.iter().map(|p| p.name.as_str()).collect();
        if vocab.len() != manifest.vocab_size || layout_names != vocab {
            bail!("{}: neighbor and layout vocabularies disagree", dir.display());
        }
        for (req, c) in &clusterings {
            if !c.assignment.keys().map(String::as_str).eq(vocab.iter().copied()) {
                bail!("{}: {} k={} covers a different vocabulary", dir.display(), req.algorithm, req.k);
            }
        }
        Ok(Self {
            manifest,
            clusterings,
            metrics,
            neighbors,
            layout,
        })
    }
}

/// Month directories holding a manifest, in month order.
pub fn complete_months(root: &Path) -> anyhow::Result<Vec<MonthId>> {
    let dir = root.join(MONTHS_DIR);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(month) = name.to_str().and_then(|n| n.parse::<MonthId>().ok()) else {
            continue;
        };
        if entry.path().join(MANIFEST).is_file() {
            out.push(month);
        }
    }
    out.sort();
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    std::io::copy(&mut file, &mut h)?;
    Ok(format!("{:x}", h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Content hash of the whole tree: relative paths and file bytes in path
/// order.
pub fn tree_hash(root: &Path) -> anyhow::Result<String> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f);
        let rel = rel.to_string_lossy().replace('\\', "/");
        h.update((rel.len() as u64).to_le_bytes());
        h.update(rel.as_bytes());
        let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(format!("{:x}", h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(clusters_file(Algorithm::KMeansPP, 100), "clusters_kmeanspp_100.json");
        assert_eq!(merges_file(Algorithm::HaAverage), "merges_ha_average.json");
        assert_eq!(neighbors_file(20), "neighbors_top20.json");
        let m: MonthId = "2021-07".parse().unwrap();
        assert_eq!(month_dir(Path::new("/a"), m), Path::new("/a/months/2021-07"));
    }

    #[test]
    fn hash_tracks_paths_and_contents() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("x")).unwrap();
        fs::write(dir.path().join("x/a.json"), "1").unwrap();
        let h1 = tree_hash(dir.path()).unwrap();
        assert_eq!(h1, tree_hash(dir.path()).unwrap());
        fs::write(dir.path().join("x/a.json"), "2").unwrap();
        let h2 = tree_hash(dir.path()).unwrap();
        assert_ne!(h1, h2);
        fs::rename(dir.path().join("x/a.json"), dir.path().join("x/b.json")).unwrap();
        assert_ne!(h2, tree_hash(dir.path()).unwrap());
        assert_eq!(sha256_hex(b"abc").len(), 64);
    }
}
