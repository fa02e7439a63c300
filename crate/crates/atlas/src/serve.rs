//! Read-only JSON API over an exported artifact tree.
//!
//! The tree is loaded once at startup; handlers only read that snapshot.
//! Every response, errors included, is an envelope carrying the API
//! version and the tree's content hash, which is repeated in the
//! `X-Artifact-Hash` header.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use commap::cluster::Algorithm;
use commap::metrics::ClusterMetrics;
use commap::temporal::{StabilityReport, StabilitySummary, Timeline, TimelineCell, ViMatrix};
use commap::MonthId;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{complete_months, month_dir, read_json, tree_hash, vi_file, MonthArtifacts, CROSS_DIR};
use crate::config::ClusterRequest;

pub const API_VERSION: &str = "v1";
pub const HASH_HEADER: &str = "x-artifact-hash";
pub const DEFAULT_NEIGHBORS: usize = 10;

pub struct ArtifactStore {
    hash: String,
    months: BTreeMap<MonthId, MonthArtifacts>,
    stability: Option<StabilitySummary>,
    vi: BTreeMap<ClusterRequest, ViMatrix>,
}

impl ArtifactStore {
    pub fn load(root: &Path) -> anyhow::Result<Self> {
        let hash = tree_hash(root).with_context(|| format!("hashing {}", root.display()))?;
        let mut months = BTreeMap::new();
        for m in complete_months(root)? {
            months.insert(m, MonthArtifacts::load(&month_dir(root, m))?);
        }
        let cross = root.join(CROSS_DIR);
        let stability_path = cross.join("stability.json");
        let stability = if stability_path.is_file() {
            Some(StabilityReport::load(&stability_path)?.summary())
        } else {
            None
        };
        let mut vi = BTreeMap::new();
        let requests: std::collections::BTreeSet<ClusterRequest> = months
            .values()
            .flat_map(|a| a.manifest.clusterings.iter().copied())
            .collect();
        for req in requests {
            let p = cross.join(format!("{}.json", vi_file(req.algorithm, req.k)));
            if p.is_file() {
                vi.insert(req, read_json(&p)?);
            }
        }
        Ok(Self {
            hash,
            months,
            stability,
            vi,
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }
}

type Shared = Arc<ArtifactStore>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code,
            message: message.into(),
        }
    }
}

fn envelope(store: &ArtifactStore, status: StatusCode, body: Value) -> Response {
    let mut resp = (status, Json(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(&store.hash) {
        resp.headers_mut().insert(HASH_HEADER, v.clone());
        if let Ok(tag) = HeaderValue::from_str(&format!("\"{}\"", store.hash)) {
            resp.headers_mut().insert(header::ETAG, tag);
        }
    }
    resp
}

fn reply<T: Serialize>(store: &ArtifactStore, result: Result<T, ApiError>) -> Response {
    match result {
        Ok(data) => envelope(
            store,
            StatusCode::OK,
            json!({"api_version": API_VERSION, "artifact_hash": store.hash, "data": data}),
        ),
        Err(e) => envelope(
            store,
            e.status,
            json!({
                "api_version": API_VERSION,
                "artifact_hash": store.hash,
                "error": {"code": e.code, "message": e.message},
            }),
        ),
    }
}

type QueryMap = Result<Query<HashMap<String, String>>, QueryRejection>;

fn query(q: QueryMap) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn param<T: FromStr>(q: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    q.get(key)
        .map(|v| v.parse().map_err(|_| ApiError::bad_request(format!("invalid value for {key}: {v:?}"))))
        .transpose()
}

fn required<T: FromStr>(q: &HashMap<String, String>, key: &str) -> Result<T, ApiError> {
    param(q, key)?.ok_or_else(|| ApiError::bad_request(format!("missing query parameter {key}")))
}

fn clustering_request(q: &HashMap<String, String>) -> Result<ClusterRequest, ApiError> {
    let algorithm: Algorithm = required(q, "algo")?;
    let k: usize = required(q, "k")?;
    Ok(ClusterRequest { algorithm, k })
}

fn count(q: &HashMap<String, String>, max: usize) -> Result<usize, ApiError> {
    let n = param(q, "n")?.unwrap_or(DEFAULT_NEIGHBORS.min(max));
    if n == 0 || n > max {
        return Err(ApiError::bad_request(format!("n must be between 1 and {max}")));
    }
    Ok(n)
}

fn month<'a>(store: &'a ArtifactStore, raw: &str) -> Result<&'a MonthArtifacts, ApiError> {
    let m: MonthId = raw
        .parse()
        .map_err(|_| ApiError::bad_request(format!("malformed month {raw:?}; expected YYYY-MM")))?;
    store
        .months
        .get(&m)
        .ok_or_else(|| ApiError::not_found("unknown_month", format!("no artifacts for {m}")))
}

fn path<T>(p: Result<UrlPath<T>, PathRejection>) -> Result<T, ApiError> {
    p.map(|UrlPath(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn months(State(s): State<Shared>) -> Response {
    let list: Vec<String> = s.months.keys().map(|m| m.to_string()).collect();
    reply(&s, Ok(list))
}

#[derive(Serialize)]
struct ClusterEntry<'a> {
    id: usize,
    size: usize,
    members: Vec<&'a str>,
}

async fn clusters(State(s): State<Shared>, p: Result<UrlPath<String>, PathRejection>, q: QueryMap) -> Response {
    let result = (|| {
        let m = month(&s, &path(p)?)?;
        let req = clustering_request(&query(q)?)?;
        let c = m.clusterings.get(&req).ok_or_else(|| {
            ApiError::not_found("unknown_clustering", format!("no {} clustering with k={}", req.algorithm, req.k))
        })?;
        let mut entries: Vec<ClusterEntry> = c
            .members()
            .into_iter()
            .enumerate()
            .map(|(id, members)| ClusterEntry {
                id,
                size: members.len(),
                members,
            })
            .collect();
        entries.sort_by(|a, b| b.size.cmp(&a.size).then(a.id.cmp(&b.id)));
        Ok(json!({
            "month": c.month,
            "algorithm": c.algorithm,
            "k": c.k,
            "seed": c.seed,
            "clusters": entries,
        }))
    })();
    reply(&s, result)
}

async fn layout(State(s): State<Shared>, p: Result<UrlPath<String>, PathRejection>) -> Response {
    let result = path(p).and_then(|raw| month(&s, &raw).map(|m| &m.layout));
    reply(&s, result)
}

async fn neighbors(State(s): State<Shared>, p: Result<UrlPath<(String, String)>, PathRejection>, q: QueryMap) -> Response {
    let result = (|| {
        let (raw, name) = path(p)?;
        let m = month(&s, &raw)?;
        let n = count(&query(q)?, m.manifest.neighbors)?;
        let list = m
            .neighbors
            .get(&name)
            .ok_or_else(|| ApiError::not_found("unknown_subreddit", format!("{name} is not in {}", m.manifest.month)))?;
        Ok(json!({
            "month": m.manifest.month,
            "subreddit": name,
            "n": n,
            "neighbors": &list[..n.min(list.len())],
        }))
    })();
    reply(&s, result)
}

async fn timeline(State(s): State<Shared>, p: Result<UrlPath<String>, PathRejection>, q: QueryMap) -> Response {
    let result = (|| {
        let name = path(p)?;
        let max = s.months.values().map(|m| m.manifest.neighbors).min().unwrap_or(DEFAULT_NEIGHBORS);
        let n = count(&query(q)?, max)?;
        if !s.months.values().any(|m| m.neighbors.contains_key(&name)) {
            return Err(ApiError::not_found("unknown_subreddit", format!("{name} appears in no month")));
        }
        let cells = s
            .months
            .values()
            .map(|m| TimelineCell {
                month: m.manifest.month,
                neighbors: m.neighbors.get(&name).cloned(),
            })
            .collect();
        Ok(Timeline::from_cells(&name, n, cells))
    })();
    reply(&s, result)
}

async fn stability(State(s): State<Shared>) -> Response {
    let result = s
        .stability
        .as_ref()
        .ok_or_else(|| ApiError::not_found("not_available", "stability needs two or more months"));
    reply(&s, result)
}

async fn vi(State(s): State<Shared>, q: QueryMap) -> Response {
    let result = query(q).and_then(|q| clustering_request(&q)).and_then(|req| {
        s.vi.get(&req).ok_or_else(|| {
            ApiError::not_found(
                "not_available",
                format!("no VI matrix for {} k={}; it needs two or more months", req.algorithm, req.k),
            )
        })
    });
    reply(&s, result)
}

async fn metrics(State(s): State<Shared>, q: QueryMap) -> Response {
    let result = query(q).and_then(|q| clustering_request(&q)).and_then(|req| {
        let per_month: BTreeMap<String, &ClusterMetrics> = s
            .months
            .iter()
            .filter_map(|(m, a)| a.metrics.get(&req).map(|x| (m.to_string(), x)))
            .collect();
        if per_month.is_empty() {
            return Err(ApiError::not_found(
                "unknown_clustering",
                format!("no {} clustering with k={}", req.algorithm, req.k),
            ));
        }
        Ok(json!({"algorithm": req.algorithm, "k": req.k, "months": per_month}))
    });
    reply(&s, result)
}

async fn fallback(State(s): State<Shared>) -> Response {
    reply::<()>(&s, Err(ApiError::not_found("not_found", "no such endpoint")))
}

pub fn router(store: Arc<ArtifactStore>) -> Router {
    Router::new()
        .route("/api/months", get(months))
        .route("/api/months/{month}/clusters", get(clusters))
        .route("/api/months/{month}/layout", get(layout))
        .route("/api/months/{month}/subreddits/{name}/neighbors", get(neighbors))
        .route("/api/subreddits/{name}/timeline", get(timeline))
        .route("/api/stability/summary", get(stability))
        .route("/api/vi", get(vi))
        .route("/api/metrics", get(metrics))
        .fallback(fallback)
        .with_state(store)
}

pub async fn serve(root: &Path, addr: SocketAddr) -> anyhow::Result<()> {
    let store = Arc::new(ArtifactStore::load(root)?);
    eprintln!("serving {} months from {} (hash {})", store.months.len(), root.display(), store.hash);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}
