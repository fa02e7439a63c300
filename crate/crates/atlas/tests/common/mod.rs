#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use atlas::config::PipelineConfig;
use atlas::serve::{router, ArtifactStore, HASH_HEADER};
use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use commap::synthetic::{dump_line, membership, planted_records, PlantedConfig};
use commap::MonthId;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The bundled one-month config, writing under `root` instead.
pub fn fixture_config(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&repo().join("fixtures/pipeline.toml")).unwrap();
    cfg.artifact_root = root.to_path_buf();
    cfg
}

/// Writes one small planted dump per month into `dir` and returns a config
/// over them with artifacts in `dir/artifacts`. Each month draws its users
/// from a different seed.
pub fn synthetic_config(dir: &Path, months: &[&str]) -> PipelineConfig {
    let planted = PlantedConfig::small();
    let members = membership(&planted);
    for (i, m) in months.iter().enumerate() {
        let month: MonthId = m.parse().unwrap();
        let mut text = String::new();
        for r in planted_records(&planted, &members, month, 100 + i as u64) {
            text.push_str(&dump_line(&r));
            text.push('\n');
        }
        fs::write(dir.join(format!("RC_{m}.jsonl")), text).unwrap();
    }
    fs::write(
        dir.join("analogies.txt"),
        ": block\nb0_s00 b0_s01\nb1_s00 b1_s01\nb2_s00 b2_s01\n",
    )
    .unwrap();
    let list: Vec<String> = months.iter().map(|m| format!("\"{m}\"")).collect();
    let toml = format!(
        r#"months = [{}]
input_dir = "."
analogies = "analogies.txt"
artifact_root = "artifacts"
neighbors = 5
clusterings = [
    {{ algorithm = "kmeanspp", k = 3 }},
    {{ algorithm = "ha_ward", k = 3 }},
]

[filter]
top_n_subreddits = 15
activity_percentile = 0.99

[train]
dim = 8
epochs = 2

[grid]
negative = [5]
downsample = [0.0]
learning_rate = [0.05]
"#,
        list.join(", ")
    );
    PipelineConfig::from_toml(&toml, dir).unwrap()
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Value,
}

pub struct Api {
    router: Router,
    pub hash: String,
}

impl Api {
    pub fn load(root: &Path) -> Self {
        let store = ArtifactStore::load(root).unwrap();
        let hash = store.hash().to_string();
        Self {
            router: router(Arc::new(store)),
            hash,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        let req = Request::get(uri).body(Body::empty()).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let body = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: body is not JSON: {e}"));
        assert_eq!(
            headers.get(HASH_HEADER).and_then(|v| v.to_str().ok()),
            Some(self.hash.as_str()),
            "{uri}: missing or wrong hash header"
        );
        Reply { status, headers, body }
    }

    /// GET that must succeed and match `def` in the API schema.
    pub async fn ok(&self, uri: &str, def: &str) -> Value {
        let r = self.get(uri).await;
        assert_eq!(r.status, StatusCode::OK, "{uri}: {}", r.body);
        assert_valid(def, &r.body);
        r.body["data"].clone()
    }

    /// GET that must fail with `status` and `code`, in the error shape.
    pub async fn err(&self, uri: &str, status: StatusCode, code: &str) {
        let r = self.get(uri).await;
        assert_eq!(r.status, status, "{uri}: {}", r.body);
        assert_valid("error_response", &r.body);
        assert_eq!(r.body["error"]["code"], code, "{uri}");
    }
}

pub fn schema_doc() -> Value {
    serde_json::from_str(&fs::read_to_string(repo().join("docs/api/schema.json")).unwrap()).unwrap()
}

pub fn schema_errors(def: &str, value: &Value) -> Vec<String> {
    let doc = schema_doc();
    assert!(doc["$defs"].get(def).is_some(), "schema has no definition {def}");
    let schema = json!({
        "$schema": doc["$schema"],
        "$defs": doc["$defs"],
        "$ref": format!("#/$defs/{def}"),
    });
    let validator = jsonschema::validator_for(&schema).unwrap();
    validator
        .iter_errors(value)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect()
}

pub fn assert_valid(def: &str, value: &Value) {
    let errors = schema_errors(def, value);
    assert!(errors.is_empty(), "{def}: {errors:#?}\n{value:#}");
}

/// The API paths a UI would request for one month of the fixture tree.
pub fn endpoint_uris(month: &str, subreddit: &str, clusterings: &[(&str, usize)]) -> Vec<(String, &'static str)> {
    let mut uris = vec![
        ("/api/months".to_string(), "months_response"),
        (format!("/api/months/{month}/layout"), "layout_response"),
        (format!("/api/months/{month}/subreddits/{subreddit}/neighbors"), "neighbors_response"),
        (format!("/api/months/{month}/subreddits/{subreddit}/neighbors?n=3"), "neighbors_response"),
        (format!("/api/subreddits/{subreddit}/timeline"), "timeline_response"),
        (format!("/api/subreddits/{subreddit}/timeline?n=2"), "timeline_response"),
    ];
    for (algo, k) in clusterings {
        uris.push((format!("/api/months/{month}/clusters?algo={algo}&k={k}"), "clusters_response"));
        uris.push((format!("/api/metrics?algo={algo}&k={k}"), "metrics_response"));
    }
    uris
}

/// SHA-256 of every file under `root` by relative path, leaving out the run
/// report, which records per-run status and the config's absolute paths.
pub fn artifact_digests(root: &Path) -> std::collections::BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut std::collections::BTreeMap<String, String>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                if rel != atlas::artifacts::RUN_REPORT {
                    out.insert(rel, atlas::artifacts::file_sha256(&path).unwrap());
                }
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}
