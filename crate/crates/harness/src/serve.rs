//! HTTP/JSON steering service over a live run.
//!
//! Each seed runs on its own thread and owns its world. Handlers read
//! snapshots published at iteration boundaries and send commands through a
//! queue; the engine thread validates, logs and applies each command at its
//! next boundary and answers with the logged record.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::commands::Command;
use crate::config::ExperimentConfig;
use crate::runner::{
    drive_seed, prepare_dir, run_reports, seed_dir_name, write_file, CommandSource, LiveState, Observer, Polled,
    Reply, Status, CONFIG_FILE,
};
use crate::HarnessError;

type Queue = mpsc::Sender<(Command, Reply)>;

/// Commands from the HTTP handlers. While the run is unpaused each boundary
/// waits at most one tick for input; while paused it waits indefinitely.
struct Live {
    rx: mpsc::Receiver<(Command, Reply)>,
    tick: Duration,
    boundary: Option<(u64, Instant)>,
    initial: Option<Command>,
}

impl CommandSource for Live {
    fn poll(&mut self, at: u64, paused: bool) -> Polled {
        if let Some(c) = self.initial.take() {
            return Polled::Command(c, None);
        }
        if paused {
            return match self.rx.recv() {
                Ok((c, r)) => Polled::Command(c, Some(r)),
                Err(_) => Polled::Idle,
            };
        }
        let deadline = match self.boundary {
            Some((b, d)) if b == at => d,
            _ => {
                let d = Instant::now() + self.tick;
                self.boundary = Some((at, d));
                d
            }
        };
        match self.rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
            Ok((c, r)) => Polled::Command(c, Some(r)),
            Err(_) => Polled::Idle,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub tick: Duration,
    /// Log a pause at iteration 0 so the operator acts before anything runs.
    pub start_paused: bool,
    pub force: bool,
}

struct RunHandle {
    state: Observer,
    queue: Mutex<Option<Queue>>,
}

#[derive(Clone)]
pub struct AppState {
    runs: Arc<BTreeMap<String, RunHandle>>,
}

/// A started, served run.
pub struct Served {
    pub dir: PathBuf,
    state: AppState,
    worker: Option<std::thread::JoinHandle<Result<(), HarnessError>>>,
}

impl Served {
    pub fn router(&self) -> Router {
        router(self.state.clone())
    }

    pub fn state(&self, id: &str) -> Option<LiveState> {
        self.state.runs.get(id).map(|h| h.state.read().expect("state lock").clone())
    }

    /// Closes every command queue; paused runs end at their boundary.
    pub fn close(&self) {
        for h in self.state.runs.values() {
            h.queue.lock().expect("queue lock").take();
        }
    }

    /// Waits for every seed and the run-level reports.
    pub fn wait(&mut self) -> Result<(), HarnessError> {
        match self.worker.take() {
            Some(w) => w.join().expect("run thread panicked"),
            None => Ok(()),
        }
    }
}

/// Starts every seed of a config on its own thread, writing the usual run
/// directory, and returns the service state.
pub fn start(cfg: ExperimentConfig, opts: &ServeOptions) -> Result<Served, HarnessError> {
    if cfg.sweep.is_some() {
        return Err(HarnessError::Config {
            key: "sweep".into(),
            message: "sweeps cannot be served; run them with `commex run`".into(),
        });
    }
    let dir = cfg.output_root().join(cfg.run_name());
    prepare_dir(&dir, opts.force)?;
    write_file(&dir.join(CONFIG_FILE), &cfg.to_toml())?;

    let mut runs = BTreeMap::new();
    let mut workers = Vec::new();
    for &seed in &cfg.seeds {
        let (tx, rx) = mpsc::channel();
        let state: Observer = Arc::new(RwLock::new(LiveState::new(cfg.mode, seed)));
        runs.insert(
            seed_dir_name(seed),
            RunHandle {
                state: state.clone(),
                queue: Mutex::new(Some(tx)),
            },
        );
        workers.push((seed, rx, state));
    }
    let tick = opts.tick;
    let start_paused = opts.start_paused;
    let out = dir.clone();
    let worker = std::thread::spawn(move || {
        let outputs = std::thread::scope(|s| {
            let handles: Vec<_> = workers
                .into_iter()
                .map(|(seed, rx, state)| {
                    let cfg = &cfg;
                    let out = &out;
                    s.spawn(move || {
                        let mut source = Live {
                            rx,
                            tick,
                            boundary: None,
                            initial: start_paused.then_some(Command::Pause),
                        };
                        drive_seed(cfg, seed, Some(&out.join(seed_dir_name(seed))), &mut source, Some(state))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("seed thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?;
        for (name, contents) in run_reports(&cfg, &outputs)? {
            write_file(&out.join(name), &contents)?;
        }
        Ok(())
    });
    Ok(Served {
        dir,
        state: AppState { runs: Arc::new(runs) },
        worker: Some(worker),
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}/metrics", get(metrics))
        .route("/runs/{id}/objects", get(objects))
        .route("/runs/{id}/commands", post(post_command))
        .route("/runs/{id}/contexts", post(post_context))
        .route("/runs/{id}/evaluations", post(post_evaluation))
        .with_state(state)
}

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn field(status: StatusCode, field: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into(), "field": field }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn handle<'a>(state: &'a AppState, id: &str) -> Result<&'a RunHandle, ApiError> {
    state
        .runs
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no run `{id}`")))
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::field(StatusCode::BAD_REQUEST, &path, e.inner().to_string())
    })
}

async fn list_runs(State(state): State<AppState>) -> Json<Value> {
    let runs: Vec<Value> = state
        .runs
        .values()
        .map(|h| serde_json::to_value(&*h.state.read().expect("state lock")).expect("states serialize"))
        .collect();
    Json(json!({ "runs": runs }))
}

#[derive(Deserialize)]
struct From {
    #[serde(default)]
    from: usize,
}

async fn metrics(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<From>) -> Result<Json<Value>, ApiError> {
    let s = handle(&state, &id)?.state.read().expect("state lock");
    let records = s.metrics.get(q.from..).unwrap_or(&[]).to_vec();
    Ok(Json(json!({
        "id": id,
        "status": s.status,
        "iteration": s.iteration,
        "from": q.from,
        "records": records,
    })))
}

async fn objects(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = handle(&state, &id)?.state.read().expect("state lock");
    let Some(objects) = &s.objects else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("{} runs have no objects; only evoc2 runs do", s.mode),
        ));
    };
    let mut v = objects.clone();
    v["id"] = json!(id);
    v["status"] = json!(s.status);
    Ok(Json(v))
}

async fn submit(state: &AppState, id: &str, cmd: Command) -> Result<Json<Value>, ApiError> {
    let h = handle(state, id)?;
    let (tx, rx) = tokio::sync::oneshot::channel();
    let kind = cmd.kind();
    let sent = {
        let q = h.queue.lock().expect("queue lock");
        let done = matches!(
            h.state.read().expect("state lock").status,
            Status::Finished | Status::Stopped | Status::Failed
        );
        match q.as_ref() {
            Some(q) if !done => q.send((cmd, tx)).is_ok(),
            _ => false,
        }
    };
    if !sent {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("run `{id}` is no longer accepting commands")));
    }
    match rx.await {
        Ok(Ok(record)) => Ok(Json(json!({ "accepted": true, "record": record }))),
        Ok(Err(message)) => {
            tracing::info!(run = id, kind, %message, "command refused");
            Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message))
        }
        Err(_) => Err(ApiError::new(StatusCode::CONFLICT, format!("run `{id}` ended before the command applied"))),
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum Lifecycle {
    Pause,
    Resume,
    Stop,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LifecycleBody {
    kind: Lifecycle,
}

async fn post_command(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    handle(&state, &id)?;
    let b: LifecycleBody = parse(&body)?;
    let cmd = match b.kind {
        Lifecycle::Pause => Command::Pause,
        Lifecycle::Resume => Command::Resume,
        Lifecycle::Stop => Command::Stop,
    };
    submit(&state, &id, cmd).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextBody {
    concept: String,
    context: String,
    weights: BTreeMap<String, BTreeMap<String, f64>>,
}

async fn post_context(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    handle(&state, &id)?;
    let b: ContextBody = parse(&body)?;
    if b.context.is_empty() {
        return Err(ApiError::field(StatusCode::BAD_REQUEST, "context", "context name must not be empty"));
    }
    submit(
        &state,
        &id,
        Command::DefineContext {
            concept: b.concept,
            context: b.context,
            weights: b.weights,
        },
    )
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluationBody {
    object: u64,
    rating: f64,
}

async fn post_evaluation(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    handle(&state, &id)?;
    let b: EvaluationBody = parse(&body)?;
    if !(0.0..=1.0).contains(&b.rating) {
        return Err(ApiError::field(
            StatusCode::UNPROCESSABLE_ENTITY,
            "rating",
            format!("rating {} is outside [0, 1]", b.rating),
        ));
    }
    submit(
        &state,
        &id,
        Command::RateObject {
            object: b.object as _,
            rating: b.rating,
        },
    )
    .await
}

/// Binds, serves until interrupted, then lets paused runs end.
pub async fn serve_forever(mut served: Served, addr: std::net::SocketAddr) -> Result<(), HarnessError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| HarnessError::io(std::path::Path::new(&addr.to_string()), e))?;
    tracing::info!(%addr, dir = %served.dir.display(), "serving");
    axum::serve(listener, served.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| HarnessError::io(std::path::Path::new(&addr.to_string()), e))?;
    served.close();
    tokio::task::spawn_blocking(move || served.wait())
        .await
        .expect("join run thread")
}
