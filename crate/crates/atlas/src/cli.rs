use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use commap::analogy::{generate_queries, load_pairs, precision_at_k};
use commap::cluster::{cluster, cut_tree, linkage_tree, Algorithm, Clustering};
use commap::embed::{default_grid, grid_search, l2_normalize, train_sgns, EmbeddingModel, TrainParams};
use commap::ingest::{build_snapshot, parse_dump_path, FilterConfig, SnapshotCorpus};
use commap::intruder::{generate_tasks, read_responses, score_responses, write_clusters_csv, TaskSet};
use commap::metrics::{coherence_scores, evaluate, gwet_ac1, CoherenceAnnotations};
use commap::temporal::{nn_stability, seed_runs, seed_sensitivity, vi_across_months};
use commap::{Exec, MonthId};
use serde::Serialize;

use crate::artifacts::{clusters_file, merges_file, read_json, write_json};
use crate::config::{PipelineConfig, ARTIFACT_ROOT_ENV};
use crate::pipeline::{run_pipeline, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "commap", version, about = "Monthly community embeddings, clusters and their stability")]
pub struct Cli {
    /// Run data-parallel kernels on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter one month's dump into a snapshot corpus directory.
    Ingest {
        #[arg(long)]
        month: MonthId,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        top_n: usize,
        #[arg(long, default_value_t = 0.95)]
        percentile: f64,
    },
    /// Train an embedding, or grid-search one when analogies are given.
    Train {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pair file; selects the best of the default grid by P@5.
        #[arg(long)]
        analogies: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Score a model on an analogy pair file.
    Analogies {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cluster a model.
    Cluster {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving clusters_<algo>_<k>.json (and merges_<algo>.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Silhouette, Davies-Bouldin and size statistics of a clustering.
    Metrics {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        clustering: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adjacent-month nearest-neighbor stability.
    Stability {
        /// Model directories in month order.
        #[arg(long, num_args = 2.., required = true)]
        models: Vec<PathBuf>,
        /// Snapshot directories whose counts give each subreddit's popularity.
        #[arg(long, num_args = 1..)]
        snapshots: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Directory receiving stability.json and stability.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// VI matrix across months, or across k-means++ seed runs with --models.
    Vi {
        /// Clustering files in month order.
        #[arg(long, num_args = 1..)]
        clusterings: Vec<PathBuf>,
        /// Model directories for seed sensitivity.
        #[arg(long, num_args = 1..)]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stem for <out>.json and <out>.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write intruder annotation sheets for a clustering.
    IntruderGen {
        #[arg(long)]
        clustering: PathBuf,
        /// Snapshot directory providing comment counts.
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Model precision from intruder responses.
    IntruderScore {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coherence scores and Gwet's AC1 from coherence responses.
    CoherenceScore {
        #[arg(long)]
        responses: PathBuf,
        /// Clustering whose clusters must all be rated; defaults to the rated ids.
        #[arg(long)]
        clustering: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured pipeline and export the artifact tree.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        root: RootArg,
        /// Rebuild months whose artifacts are current.
        #[arg(long)]
        force: bool,
    },
    /// Serve an artifact tree over the read-only JSON API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        root: RootArg,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Args, Debug)]
struct RootArg {
    /// Artifact root; overrides the config file.
    #[arg(long = "root", env = ARTIFACT_ROOT_ENV)]
    root: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    negative: usize,
    #[arg(long, default_value_t = 0.0)]
    downsample: f64,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f32,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl ParamArgs {
    fn params(&self) -> TrainParams {
        TrainParams {
            dim: self.dim,
            negative: self.negative,
            downsample: self.downsample,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            workers: self.workers,
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn load_model(dir: &Path) -> anyhow::Result<EmbeddingModel> {
    let model = EmbeddingModel::load(dir).with_context(|| format!("loading model {}", dir.display()))?;
    Ok(l2_normalize(&model)?)
}

fn stem(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(format!(".{ext}"));
    PathBuf::from(s)
}

fn resolve_config(path: &Path, root: &RootArg) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(r) = &root.root {
        cfg.artifact_root = r.clone();
    }
    Ok(cfg)
}

pub fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Ingest {
            month,
            input,
            out,
            top_n,
            percentile,
        } => {
            let dump = parse_dump_path(&input, month)?;
            let t = &dump.tally;
            eprintln!(
                "{} lines: {} records, {} malformed, {} outside {month}",
                t.lines, t.records, t.malformed, t.out_of_month
            );
            let cfg = FilterConfig {
                month,
                top_n_subreddits: top_n,
                activity_percentile: percentile,
            };
            let corpus = build_snapshot(&dump.records, &cfg)?;
            corpus.write_dir(&out)?;
            emit(corpus.stats(), None)
        }
        Command::Train {
            snapshot,
            out,
            analogies,
            params,
        } => {
            let corpus = SnapshotCorpus::read_dir(&snapshot)?;
            let base = params.params();
            let model = match analogies {
                Some(pairs) => {
                    let (model, report) = grid_search(&corpus, &default_grid(&base), &load_pairs(&pairs)?)?;
                    fs::create_dir_all(&out)?;
                    write_json(&out.join("grid.json"), &report)?;
                    model
                }
                None => l2_normalize(&train_sgns(&corpus, &base)?)?,
            };
            model.save(&out)?;
            eprintln!("{} vectors of dimension {} written to {}", model.len(), model.dim(), out.display());
            Ok(())
        }
        Command::Analogies {
            model,
            pairs,
            k,
            json,
            csv,
        } => {
            let model = load_model(&model)?;
            let queries = generate_queries(&load_pairs(&pairs)?);
            let report = precision_at_k(&model, &queries, k)?;
            if let Some(p) = csv {
                report.write_csv(model.month(), fs::File::create(&p)?)?;
            }
            emit(&report, json.as_deref())
        }
        Command::Cluster {
            model,
            algo,
            k,
            seed,
            out,
        } => {
            let model = load_model(&model)?;
            fs::create_dir_all(&out)?;
            let c = match algo.linkage() {
                Some(linkage) => {
                    let tree = linkage_tree(&model, linkage)?;
                    tree.save(&out.join(merges_file(algo)))?;
                    cut_tree(&tree, k)?
                }
                None => cluster(&model, algo, k, seed)?,
            };
            c.save(&out.join(clusters_file(algo, k)))?;
            eprintln!("sizes: {:?}", c.sizes());
            Ok(())
        }
        Command::Metrics { model, clustering, out } => {
            let model = load_model(&model)?;
            let c = Clustering::load(&clustering)?;
            emit(&evaluate(&model, &c)?, out.as_deref())
        }
        Command::Stability {
            models,
            snapshots,
            n,
            out,
        } => {
            let models = models.iter().map(|d| load_model(d)).collect::<anyhow::Result<Vec<_>>>()?;
            let mut popularity: BTreeMap<String, u64> = BTreeMap::new();
            for s in &snapshots {
                let vocab: BTreeMap<String, u64> = read_json(&s.join("vocab.json"))?;
                for (name, c) in vocab {
                    *popularity.entry(name).or_default() += c;
                }
            }
            let report = nn_stability(&models, n, &popularity, exec)?;
            fs::create_dir_all(&out)?;
            report.save(&out.join("stability.json"))?;
            report.write_csv(fs::File::create(out.join("stability.csv"))?)?;
            emit(&report.summary(), None)
        }
        Command::Vi {
            clusterings,
            models,
            runs,
            k,
            seed,
            out,
        } => {
            let matrix = match (clusterings.is_empty(), models.is_empty()) {
                (false, true) => {
                    let cs = clusterings
                        .iter()
                        .map(|p| Clustering::load(p).map_err(anyhow::Error::from))
                        .collect::<anyhow::Result<Vec<_>>>()?;
                    vi_across_months(&cs, exec)?
                }
                (true, false) => {
                    let per_month = models
                        .iter()
                        .map(|d| Ok(seed_runs(&load_model(d)?, k, runs, seed, exec)?))
                        .collect::<anyhow::Result<Vec<_>>>()?;
                    seed_sensitivity(&per_month, exec)?
                }
                _ => bail!("give either --clusterings or --models"),
            };
            matrix.save(&stem(&out, "json"))?;
            matrix.write_csv(fs::File::create(stem(&out, "csv"))?)?;
            emit(&matrix, None)
        }
        Command::IntruderGen {
            clustering,
            snapshot,
            seed,
            out,
        } => {
            let c = Clustering::load(&clustering)?;
            let counts: BTreeMap<String, u64> = read_json(&snapshot.join("vocab.json"))?;
            let set = generate_tasks(&c, &counts, seed)?;
            fs::create_dir_all(&out)?;
            set.save(&out.join("tasks.json"))?;
            set.write_tasks_csv(fs::File::create(out.join("tasks.csv"))?)?;
            set.write_key_csv(fs::File::create(out.join("key.csv"))?)?;
            write_clusters_csv(&c, fs::File::create(out.join("clusters.csv"))?)?;
            for s in &set.skipped {
                eprintln!("cluster {} skipped: {}", s.cluster, s.reason);
            }
            eprintln!("{} tasks written to {}", set.tasks.len(), out.display());
            Ok(())
        }
        Command::IntruderScore { tasks, responses, out } => {
            let set = TaskSet::load(&tasks)?;
            let file = fs::File::open(&responses).with_context(|| format!("opening {}", responses.display()))?;
            let summary = score_responses(&set.tasks, &read_responses(file)?)?;
            emit(&summary, out.as_deref())
        }
        Command::CoherenceScore {
            responses,
            clustering,
            out,
        } => {
            let ann = CoherenceAnnotations::read_csv(&responses)?;
            let ids: Vec<usize> = match clustering {
                Some(p) => (0..Clustering::load(&p)?.k).collect(),
                None => ann.rated_clusters(),
            };
            let scores = coherence_scores(&ann, &ids)?;
            let ac1 = gwet_ac1(&ann, &ids).ok();
            emit(&serde_json::json!({"coherence": scores, "gwet_ac1": ac1}), out.as_deref())
        }
        Command::Export { config, root, force } => {
            let cfg = resolve_config(&config, &root)?;
            let report = run_pipeline(&cfg, RunOptions { force, exec })?;
            emit(&report, None)?;
            if !report.succeeded() {
                bail!("pipeline finished with failures; see {}", cfg.artifact_root.join("run_report.json").display());
            }
            Ok(())
        }
        Command::Serve {
            config,
            root,
            port,
            host,
        } => {
            let cfg = config.as_deref().map(|p| resolve_config(p, &root)).transpose()?;
            let dir = match (&root.root, &cfg) {
                (Some(r), _) => r.clone(),
                (None, Some(c)) => c.artifact_root.clone(),
                (None, None) => bail!("no artifact root: pass --root, --config or set {ARTIFACT_ROOT_ENV}"),
            };
            let port = port.or(cfg.as_ref().map(|c| c.port)).unwrap_or(8080);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::serve::serve(&dir, SocketAddr::new(host, port)))
        }
    }
}
