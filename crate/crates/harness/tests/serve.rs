use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use commex_harness::serve::{start, ServeOptions, Served};
use commex_harness::{replay, ExperimentConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn served(root: &std::path::Path, text: &str, start_paused: bool) -> Served {
    let cfg = ExperimentConfig::from_toml(text, &[("output.root".into(), toml::Value::String(root.display().to_string()))]).unwrap();
    start(
        cfg,
        &ServeOptions {
            tick: Duration::from_millis(1),
            start_paused,
            force: false,
        },
    )
    .unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn finish(mut s: Served) -> std::path::PathBuf {
    s.close();
    tokio::task::block_in_place(|| s.wait()).unwrap();
    s.dir.clone()
}

const LONG_EVOC: &str = "mode = \"evoc\"\nseeds = [0]\n[output]\nname = \"live\"\n[world]\nwidth = 5\nheight = 5\niterations = 100000\n";

#[tokio::test(flavor = "multi_thread")]
async fn pause_freezes_the_iteration_counter() {
    let tmp = tempfile::tempdir().unwrap();
    let s = served(tmp.path(), LONG_EVOC, false);
    let app = s.router();
    tokio::time::sleep(Duration::from_millis(30)).await;

    let (st, body) = call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "pause"}))).await;
    assert_eq!(st, StatusCode::OK, "{body}");
    let at = body["record"]["applied_at_iteration"].as_u64().unwrap();

    let (_, m1) = call(&app, "GET", "/runs/seed-0/metrics", None).await;
    tokio::time::sleep(Duration::from_millis(40)).await;
    let (_, m2) = call(&app, "GET", &format!("/runs/seed-0/metrics?from={at}"), None).await;
    assert_eq!(m1["iteration"], at);
    assert_eq!(m2["iteration"], at);
    assert_eq!(m1["status"], "paused");
    assert_eq!(m1["records"].as_array().unwrap().len() as u64, at);
    assert!(m2["records"].as_array().unwrap().is_empty());

    call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "resume"}))).await;
    tokio::time::sleep(Duration::from_millis(30)).await;
    let (_, m3) = call(&app, "GET", "/runs/seed-0/metrics", None).await;
    assert!(m3["iteration"].as_u64().unwrap() > at);

    let (st, stop) = call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "stop"}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(stop["record"]["index"], 2);
    let dir = finish(s);

    let (st, _) = call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "pause"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (_, runs) = call(&app, "GET", "/runs", None).await;
    assert_eq!(runs["runs"][0]["status"], "stopped");
    assert_eq!(runs["runs"][0]["commands"].as_array().unwrap().len(), 3);

    let r = replay(&dir).unwrap();
    assert!(r.identical, "{:?}", r.divergence);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_requests_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let s = served(tmp.path(), "mode = \"evoc2\"\n[exchange]\niterations = 50\n", true);
    let app = s.router();

    let (st, _) = call(&app, "GET", "/runs/seed-9/metrics", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/runs/nope/evaluations", Some(json!({"object": 1, "rating": 0.5}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let (st, e) = call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "explode"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "kind");
    let (st, e) = call(&app, "POST", "/runs/seed-0/contexts", Some(json!({"concept": "TIRE", "weights": {}}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert!(e["error"].as_str().unwrap().contains("context"), "{e}");
    let (st, e) = call(
        &app,
        "POST",
        "/runs/seed-0/contexts",
        Some(json!({"concept": "TIRE", "context": "garden", "weights": {"worn": {"rubber": "lots"}}})),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "weights.worn.rubber");

    let (st, e) = call(
        &app,
        "POST",
        "/runs/seed-0/contexts",
        Some(json!({"concept": "TIRE", "context": "garden", "weights": {"worn": {"sparkle": 1.0}}})),
    )
    .await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let msg = e["error"].as_str().unwrap();
    assert!(msg.contains("sparkle") && msg.contains("holds_weight") && msg.contains("weather_resistant"), "{msg}");

    let (st, e) = call(&app, "POST", "/runs/seed-0/evaluations", Some(json!({"object": 1, "rating": 1.5}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["field"], "rating");
    let (st, _) = call(&app, "POST", "/runs/seed-0/evaluations", Some(json!({"object": 999, "rating": 0.5}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    // Only the start-up pause made it into the log.
    let (_, runs) = call(&app, "GET", "/runs", None).await;
    assert_eq!(runs["runs"][0]["commands"].as_array().unwrap().len(), 1);
    let dir = finish(s);
    assert!(replay(&dir).unwrap().identical);
}

#[tokio::test(flavor = "multi_thread")]
async fn objects_are_only_served_for_exchange_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let s = served(tmp.path(), LONG_EVOC, true);
    let (st, _) = call(&s.router(), "GET", "/runs/seed-0/objects", None).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _) = call(
        &s.router(),
        "POST",
        "/runs/seed-0/evaluations",
        Some(json!({"object": 1, "rating": 0.5})),
    )
    .await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    finish(s);
}

#[tokio::test(flavor = "multi_thread")]
async fn zero_rating_lowers_utility() {
    let tmp = tempfile::tempdir().unwrap();
    let s = served(tmp.path(), "mode = \"evoc2\"\n[exchange]\niterations = 100000\n", false);
    let app = s.router();

    let mut useful = None;
    for _ in 0..500 {
        let (_, objs) = call(&app, "GET", "/runs/seed-0/objects", None).await;
        if objs["objects"].as_array().is_some_and(|o| o.iter().filter(|x| x["utility"].as_f64().unwrap() > 0.5).count() >= 1) {
            let (st, _) = call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "pause"}))).await;
            assert_eq!(st, StatusCode::OK);
            let (_, objs) = call(&app, "GET", "/runs/seed-0/objects", None).await;
            useful = objs["objects"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|x| x["utility"].as_f64().unwrap() > 0.5)
                .max_by(|a, b| a["utility"].as_f64().unwrap().total_cmp(&b["utility"].as_f64().unwrap()))
                .cloned();
            if useful.is_some() {
                break;
            }
            call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "resume"}))).await;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let useful = useful.expect("a useful object appears");
    let id = useful["id"].as_u64().unwrap();
    let before = useful["utility"].as_f64().unwrap();

    let (st, r) = call(&app, "POST", "/runs/seed-0/evaluations", Some(json!({"object": id, "rating": 0.0}))).await;
    assert_eq!(st, StatusCode::OK, "{r}");
    assert_eq!(r["record"]["command"]["kind"], "rate_object");
    let (_, objs) = call(&app, "GET", "/runs/seed-0/objects", None).await;
    let after = objs["objects"].as_array().unwrap().iter().find(|o| o["id"] == id).unwrap()["utility"].as_f64().unwrap();
    assert!(after < before, "{after} !< {before}");

    call(&app, "POST", "/runs/seed-0/commands", Some(json!({"kind": "stop"}))).await;
    let dir = finish(s);
    let r = replay(&dir).unwrap();
    assert!(r.identical, "{:?}", r.divergence);
}
