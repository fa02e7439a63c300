use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use commap::cluster::Algorithm;
use commap::embed::TrainParams;
use commap::ingest::FilterConfig;
use commap::MonthId;
use serde::{Deserialize, Serialize};

/// Overrides `artifact_root` from the config file.
pub const ARTIFACT_ROOT_ENV: &str = "COMMAP_ARTIFACTS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
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

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            top_n_subreddits: default_top_n(),
            activity_percentile: default_percentile(),
        }
    }
}

impl FilterSection {
    pub fn for_month(&self, month: MonthId) -> FilterConfig {
        FilterConfig {
            month,
            top_n_subreddits: self.top_n_subreddits,
            activity_percentile: self.activity_percentile,
        }
    }
}

/// Cartesian grid over the tuned hyperparameters; everything else comes
/// from `train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_negative")]
    pub negative: Vec<usize>,
    #[serde(default = "default_downsample")]
    pub downsample: Vec<f64>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: Vec<f32>,
}

fn default_negative() -> Vec<usize> {
    vec![10, 20]
}

fn default_downsample() -> Vec<f64> {
    vec![0.0, 0.001, 0.005]
}

fn default_learning_rate() -> Vec<f32> {
    vec![0.05, 0.08]
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            negative: default_negative(),
            downsample: default_downsample(),
            learning_rate: default_learning_rate(),
        }
    }
}

impl GridSection {
    pub fn expand(&self, base: &TrainParams) -> Vec<TrainParams> {
        let mut out = Vec::new();
        for &negative in &self.negative {
            for &downsample in &self.downsample {
                for &learning_rate in &self.learning_rate {
                    out.push(TrainParams {
                        negative,
                        downsample,
                        learning_rate,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterRequest {
    pub algorithm: Algorithm,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub months: Vec<MonthId>,
    /// Directory searched for `RC_<month>.jsonl.zst`, `.jsonl.gz` or `.jsonl`.
    #[serde(default)]
    pub input_dir: Option<PathBuf>,
    /// Explicit dump per month; takes precedence over `input_dir`.
    #[serde(default)]
    pub inputs: BTreeMap<MonthId, PathBuf>,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub grid: GridSection,
    pub clusterings: Vec<ClusterRequest>,
    #[serde(default)]
    pub cluster_seed: u64,
    pub analogies: PathBuf,
    pub artifact_root: PathBuf,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
}

fn default_port() -> u16 {
    8080
}

fn default_neighbors() -> usize {
    20
}

impl PipelineConfig {
    /// Parses a TOML config. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).context("invalid pipeline config")?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.input_dir.as_mut() {
            fix(d);
        }
        cfg.inputs.values_mut().for_each(fix);
        fix(&mut cfg.analogies);
        fix(&mut cfg.artifact_root);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.months.is_empty() {
            bail!("config lists no months");
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(m) = self.months.iter().find(|m| !seen.insert(**m)) {
            bail!("month {m} listed twice");
        }
        if self.clusterings.iter().any(|c| c.k == 0) {
            bail!("cluster counts must be positive");
        }
        if self.neighbors == 0 {
            bail!("neighbors must be positive");
        }
        self.train.validate()?;
        if self.grid.expand(&self.train).is_empty() {
            bail!("empty parameter grid");
        }
        for m in &self.months {
            self.filter.for_month(*m).validate()?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<TrainParams> {
        self.grid.expand(&self.train)
    }

    /// The dump file for a month.
    pub fn input_for(&self, month: MonthId) -> anyhow::Result<PathBuf> {
        if let Some(p) = self.inputs.get(&month) {
            return Ok(p.clone());
        }
        let Some(dir) = &self.input_dir else {
            bail!("no input configured for {month}");
        };
        for ext in ["jsonl.zst", "jsonl.gz", "jsonl"] {
            let p = dir.join(format!("RC_{month}.{ext}"));
            if p.is_file() {
                return Ok(p);
            }
        }
        bail!("no RC_{month}.jsonl[.zst|.gz] in {}", dir.display())
    }
}
