mod common;

use std::fs;
use std::path::PathBuf;
use std::sync::OnceLock;

use atlas::artifacts::tree_hash;
use atlas::pipeline::{run_pipeline, RunOptions};
use axum::http::{header, StatusCode};
use commap::Exec;
use common::{endpoint_uris, fixture_config, synthetic_config, Api};

fn build(name: &str, make: impl FnOnce(PathBuf) -> atlas::config::PipelineConfig) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let cfg = make(dir);
    let report = run_pipeline(
        &cfg,
        RunOptions {
            force: true,
            exec: Exec::default(),
        },
    )
    .unwrap();
    assert!(report.succeeded(), "{report:#?}");
    cfg.artifact_root
}

/// The bundled fixture month, built once per test binary.
fn fixture_tree() -> &'static PathBuf {
    static TREE: OnceLock<PathBuf> = OnceLock::new();
    TREE.get_or_init(|| build("api-fixture", |dir| fixture_config(&dir.join("artifacts"))))
}

/// Three synthetic months, so cross-month endpoints have data.
fn multi_tree() -> &'static PathBuf {
    static TREE: OnceLock<PathBuf> = OnceLock::new();
    TREE.get_or_init(|| build("api-multi", |dir| synthetic_config(&dir, &["2022-01", "2022-02", "2022-03"])))
}

const FIXTURE_CLUSTERINGS: [(&str, usize); 2] = [("kmeanspp", 4), ("ha_ward", 4)];

#[tokio::test]
async fn fixture_endpoints_match_schema() {
    let api = Api::load(fixture_tree());
    for (uri, def) in endpoint_uris("2022-03", "chicago", &FIXTURE_CLUSTERINGS) {
        api.ok(&uri, def).await;
    }
    let months = api.ok("/api/months", "months_response").await;
    assert_eq!(months, serde_json::json!(["2022-03"]));
}

#[tokio::test]
async fn cross_month_endpoints_need_two_months() {
    let api = Api::load(fixture_tree());
    api.err("/api/stability/summary", StatusCode::NOT_FOUND, "not_available").await;
    api.err("/api/vi?algo=kmeanspp&k=4", StatusCode::NOT_FOUND, "not_available").await;
}

#[tokio::test]
async fn clusters_partition_the_vocabulary() {
    let api = Api::load(fixture_tree());
    let data = api.ok("/api/months/2022-03/clusters?algo=ha_ward&k=4", "clusters_response").await;
    let clusters = data["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 4);
    let sizes: Vec<u64> = clusters.iter().map(|c| c["size"].as_u64().unwrap()).collect();
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
    let mut names: Vec<&str> = clusters
        .iter()
        .flat_map(|c| c["members"].as_array().unwrap().iter().map(|m| m.as_str().unwrap()))
        .collect();
    assert_eq!(names.len() as u64, sizes.iter().sum::<u64>());
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 16);
    assert_eq!(data["seed"], serde_json::Value::Null);

    let km = api.ok("/api/months/2022-03/clusters?algo=kmeanspp&k=4", "clusters_response").await;
    assert!(km["seed"].is_u64());
}

#[tokio::test]
async fn neighbors_are_ranked_and_truncated() {
    let api = Api::load(fixture_tree());
    let full = api.ok("/api/months/2022-03/subreddits/chicago/neighbors", "neighbors_response").await;
    let list = full["neighbors"].as_array().unwrap();
    assert_eq!(full["n"], 10);
    assert_eq!(list.len(), 10);
    let sims: Vec<f64> = list.iter().map(|n| n["similarity"].as_f64().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]), "{sims:?}");
    assert!(list.iter().all(|n| n["name"] != "chicago"));

    let three = api.ok("/api/months/2022-03/subreddits/chicago/neighbors?n=3", "neighbors_response").await;
    assert_eq!(three["neighbors"].as_array().unwrap()[..], list[..3]);
    let max = api.ok("/api/months/2022-03/subreddits/chicago/neighbors?n=15", "neighbors_response").await;
    assert_eq!(max["neighbors"].as_array().unwrap().len(), 15);
}

#[tokio::test]
async fn layout_covers_the_vocabulary() {
    let api = Api::load(fixture_tree());
    let data = api.ok("/api/months/2022-03/layout", "layout_response").await;
    assert_eq!(data["points"].as_array().unwrap().len(), 16);
    let v = data["variance"].as_array().unwrap();
    assert!(v[0].as_f64().unwrap() >= v[1].as_f64().unwrap());
}

#[tokio::test]
async fn unknown_resources_are_404() {
    let api = Api::load(fixture_tree());
    api.err("/api/months/2021-01/layout", StatusCode::NOT_FOUND, "unknown_month").await;
    api.err("/api/months/2021-01/clusters?algo=kmeanspp&k=4", StatusCode::NOT_FOUND, "unknown_month").await;
    api.err("/api/months/2022-03/subreddits/nosuchsub/neighbors", StatusCode::NOT_FOUND, "unknown_subreddit").await;
    api.err("/api/subreddits/nosuchsub/timeline", StatusCode::NOT_FOUND, "unknown_subreddit").await;
    api.err("/api/months/2022-03/clusters?algo=kmeanspp&k=7", StatusCode::NOT_FOUND, "unknown_clustering").await;
    api.err("/api/months/2022-03/clusters?algo=ha_average&k=4", StatusCode::NOT_FOUND, "unknown_clustering").await;
    api.err("/api/metrics?algo=ha_complete&k=4", StatusCode::NOT_FOUND, "unknown_clustering").await;
    api.err("/api/nothing", StatusCode::NOT_FOUND, "not_found").await;
    api.err("/", StatusCode::NOT_FOUND, "not_found").await;
}

#[tokio::test]
async fn malformed_requests_are_400() {
    let api = Api::load(fixture_tree());
    for uri in [
        "/api/months/2022-13/layout",
        "/api/months/march/layout",
        "/api/months/2022-03/clusters",
        "/api/months/2022-03/clusters?algo=kmeanspp",
        "/api/months/2022-03/clusters?algo=kmeans&k=4",
        "/api/months/2022-03/clusters?algo=kmeanspp&k=four",
        "/api/months/2022-03/clusters?algo=kmeanspp&k=-1",
        "/api/months/2022-03/subreddits/chicago/neighbors?n=0",
        "/api/months/2022-03/subreddits/chicago/neighbors?n=21",
        "/api/months/2022-03/subreddits/chicago/neighbors?n=x",
        "/api/subreddits/chicago/timeline?n=0",
        "/api/vi?k=4",
        "/api/metrics?algo=ha_ward&k=",
    ] {
        api.err(uri, StatusCode::BAD_REQUEST, "bad_request").await;
    }
}

#[tokio::test]
async fn every_response_carries_the_tree_hash() {
    let root = fixture_tree();
    let api = Api::load(root);
    assert_eq!(api.hash, tree_hash(root).unwrap());
    for uri in ["/api/months", "/api/months/1999-01/layout", "/api/vi?algo=x&k=1"] {
        let r = api.get(uri).await;
        assert_eq!(r.body["artifact_hash"], api.hash.as_str());
        assert_eq!(r.body["api_version"], "v1");
        let etag = r.headers.get(header::ETAG).unwrap().to_str().unwrap();
        assert_eq!(etag, format!("\"{}\"", api.hash));
    }
}

#[tokio::test]
async fn serving_never_writes_to_the_tree() {
    let root = multi_tree();
    let before = tree_hash(root).unwrap();
    let api = Api::load(root);
    let mut uris: Vec<String> = Vec::new();
    for m in ["2022-01", "2022-02", "2022-03", "2022-04"] {
        uris.extend(endpoint_uris(m, "b0_s00", &[("kmeanspp", 3), ("ha_ward", 3)]).into_iter().map(|(u, _)| u));
    }
    uris.extend(["/api/stability/summary".into(), "/api/vi?algo=ha_ward&k=3".into(), "/api/bogus".into()]);
    for _ in 0..10 {
        for uri in &uris {
            api.get(uri).await;
        }
    }
    assert_eq!(tree_hash(root).unwrap(), before);
}

#[tokio::test]
async fn multi_month_endpoints() {
    let api = Api::load(multi_tree());
    let months = api.ok("/api/months", "months_response").await;
    assert_eq!(months, serde_json::json!(["2022-01", "2022-02", "2022-03"]));

    for algo in ["kmeanspp", "ha_ward"] {
        let vi = api.ok(&format!("/api/vi?algo={algo}&k=3"), "vi_response").await;
        let values: Vec<Vec<f64>> = serde_json::from_value(vi["values"].clone()).unwrap();
        assert_eq!(values.len(), 3);
        for i in 0..3 {
            assert_eq!(values[i].len(), 3);
            assert_eq!(values[i][i], 0.0);
            for j in 0..3 {
                assert_eq!(values[i][j], values[j][i]);
            }
        }
        let metrics = api.ok(&format!("/api/metrics?algo={algo}&k=3"), "metrics_response").await;
        assert_eq!(metrics["months"].as_object().unwrap().len(), 3);
    }

    let stability = api.ok("/api/stability/summary", "stability_summary_response").await;
    assert_eq!(stability["months"].as_array().unwrap().len(), 3);
    assert_eq!(stability["subreddits"], 15);
    assert_eq!(stability["n"], 5);

    let timeline = api.ok("/api/subreddits/b1_s02/timeline?n=4", "timeline_response").await;
    assert_eq!(timeline["cells"].as_array().unwrap().len(), 3);
    assert_eq!(timeline["jaccard"].as_array().unwrap().len(), 2);
    for cell in timeline["cells"].as_array().unwrap() {
        assert_eq!(cell["neighbors"].as_array().unwrap().len(), 4);
    }
    api.err("/api/subreddits/b1_s02/timeline?n=6", StatusCode::BAD_REQUEST, "bad_request").await;
}
