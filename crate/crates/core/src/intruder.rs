//! Subreddit-intruder annotation tasks: popularity-matched generation,
//! annotation sheets, and model-precision scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{Algorithm, Clustering};
use crate::metrics::mean_std;
use crate::{Error, MonthId, Result};

/// Members shown per task; the intruder makes six.
pub const MEMBERS_PER_TASK: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntruderTask {
    pub id: String,
    pub month: MonthId,
    pub cluster: usize,
    pub members: Vec<String>,
    pub intruder: String,
    pub presented: Vec<String>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum SkipReason {
    FewerThanFive { size: usize },
    NoValidIntruder,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::FewerThanFive { size } => write!(f, "fewer than five members ({size})"),
            SkipReason::NoValidIntruder => f.write_str("no valid intruder"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCluster {
    pub cluster: usize,
    #[serde(flatten)]
    pub reason: SkipReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub month: MonthId,
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    /// Population stddev of the month's vocabulary comment counts.
    pub sigma: f64,
    pub tasks: Vec<IntruderTask>,
    pub skipped: Vec<SkippedCluster>,
}

/// Intruder tasks for every cluster with at least five members.
///
/// Members are the cluster's five highest-count subreddits (ties by name).
/// The intruder is drawn uniformly from subreddits outside the cluster whose
/// count lies in `[mu - sigma, mu + sigma]`, `mu` being the members' mean.
pub fn generate_tasks(clustering: &Clustering, counts: &BTreeMap<String, u64>, seed: u64) -> Result<TaskSet> {
    let count = |name: &str| {
        counts
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no comment count for {name}")))
    };
    let all: Vec<(&str, u64)> = clustering
        .assignment
        .keys()
        .map(|n| Ok((n.as_str(), count(n)?)))
        .collect::<Result<_>>()?;
    let (_, sigma) = mean_std(&all.iter().map(|(_, c)| *c as f64).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    let mut skipped = Vec::new();
    for (cluster, names) in clustering.members().into_iter().enumerate() {
        if names.len() < MEMBERS_PER_TASK {
            skipped.push(SkippedCluster {
                cluster,
                reason: SkipReason::FewerThanFive { size: names.len() },
            });
            continue;
        }
        let mut ranked: Vec<(&str, u64)> = names.iter().map(|n| (*n, counts[*n])).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(MEMBERS_PER_TASK);
        let mu = ranked.iter().map(|(_, c)| *c as f64).sum::<f64>() / MEMBERS_PER_TASK as f64;
        let inside: BTreeSet<&str> = names.iter().copied().collect();
        let pool: Vec<&str> = all
            .iter()
            .filter(|(n, c)| !inside.contains(n) && within(*c, mu, sigma))
            .map(|(n, _)| *n)
            .collect();
        let Some(&intruder) = pool.choose(&mut rng) else {
            skipped.push(SkippedCluster {
                cluster,
                reason: SkipReason::NoValidIntruder,
            });
            continue;
        };
        let members: Vec<String> = ranked.iter().map(|(n, _)| n.to_string()).collect();
        let mut presented = members.clone();
        presented.push(intruder.to_string());
        presented.shuffle(&mut rng);
        tasks.push(IntruderTask {
            id: format!("{}-{}-{}-c{cluster}", clustering.month, clustering.algorithm, clustering.k),
            month: clustering.month,
            cluster,
            members,
            intruder: intruder.to_string(),
            presented,
            seed,
        });
    }
    Ok(TaskSet {
        month: clustering.month,
        algorithm: clustering.algorithm,
        k: clustering.k,
        seed,
        sigma,
        tasks,
        skipped,
    })
}

/// Closed popularity window around `mu`.
pub fn within(count: u64, mu: f64, sigma: f64) -> bool {
    let c = count as f64;
    c >= mu - sigma && c <= mu + sigma
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntruderResponse {
    pub annotator: String,
    pub task_id: String,
    pub chosen: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    pub cluster: usize,
    pub responses: usize,
    pub correct: usize,
    /// `None` for tasks nobody answered.
    pub mp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSummary {
    pub tasks: Vec<TaskScore>,
    /// Mean MP over answered tasks.
    pub mean: Option<f64>,
    /// Number of answered tasks at each distinct MP value, ascending.
    pub distribution: Vec<(f64, usize)>,
}

/// Model precision per task: the share of that task's annotators who
/// picked the intruder.
pub fn score_responses(tasks: &[IntruderTask], responses: &[IntruderResponse]) -> Result<PrecisionSummary> {
    let by_id: BTreeMap<&str, &IntruderTask> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in responses {
        let task = by_id
            .get(r.task_id.as_str())
            .ok_or_else(|| Error::InvalidAnnotation(format!("unknown task {}", r.task_id)))?;
        if !task.presented.contains(&r.chosen) {
            return Err(Error::InvalidAnnotation(format!(
                "{} chose {} which task {} did not present",
                r.annotator, r.chosen, r.task_id
            )));
        }
        if !seen.insert((r.annotator.as_str(), r.task_id.as_str())) {
            return Err(Error::InvalidAnnotation(format!(
                "{} answered task {} more than once",
                r.annotator, r.task_id
            )));
        }
        let e = tally.entry(task.id.as_str()).or_default();
        e.0 += 1;
        e.1 += (r.chosen == task.intruder) as usize;
    }
    let scores: Vec<TaskScore> = tasks
        .iter()
        .map(|t| {
            let (responses, correct) = tally.get(t.id.as_str()).copied().unwrap_or((0, 0));
            TaskScore {
                task_id: t.id.clone(),
                cluster: t.cluster,
                responses,
                correct,
                mp: (responses > 0).then(|| correct as f64 / responses as f64),
            }
        })
        .collect();
    let answered: Vec<f64> = scores.iter().filter_map(|s| s.mp).collect();
    let mean = (!answered.is_empty()).then(|| answered.iter().sum::<f64>() / answered.len() as f64);
    let mut distribution: Vec<(f64, usize)> = Vec::new();
    let mut sorted = answered;
    sorted.sort_by(f64::total_cmp);
    for v in sorted {
        match distribution.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => distribution.push((v, 1)),
        }
    }
    Ok(PrecisionSummary {
        tasks: scores,
        mean,
        distribution,
    })
}

impl TaskSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path).map_err(|e| Error::io(path, e))?)?)
    }

    /// Annotator sheet: task id and the six names in presented order.
    pub fn write_tasks_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task_id", "s1", "s2", "s3", "s4", "s5", "s6"])?;
        for t in &self.tasks {
            let mut row = vec![t.id.as_str()];
            row.extend(t.presented.iter().map(String::as_str));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Answer key, kept apart from the annotator sheet.
    pub fn write_key_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task_id", "intruder"])?;
        for t in &self.tasks {
            w.write_record([&t.id, &t.intruder])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Reads `annotator,task_id,chosen` rows.
pub fn read_responses<R: Read>(input: R) -> Result<Vec<IntruderResponse>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Coherence sheet: one row per cluster with its members joined by `;`.
pub fn write_clusters_csv<W: Write>(clustering: &Clustering, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster_id", "size", "members"])?;
    for (c, members) in clustering.members().iter().enumerate() {
        w.write_record([c.to_string(), members.len().to_string(), members.join(";")])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
