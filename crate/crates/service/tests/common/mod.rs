#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use jam_service::{router, AppState, ServiceConfig};

pub struct Harness {
    pub dir: TempDir,
    pub state: Arc<AppState>,
    pub app: Router,
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

impl Harness {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (state, app) = open(&dir);
        Harness { dir, state, app }
    }

    /// A fresh service over the same data directory, as after a restart.
    pub fn restart(&mut self) {
        let (state, app) = open(&self.dir);
        self.state = state;
        self.app = app;
    }

    pub async fn send(&self, req: Request<Body>) -> (StatusCode, Value) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let req = Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send(req).await
    }

    pub async fn create(&self, config: Value) -> String {
        let (status, body) = self.post("/sessions", config).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    pub async fn events(&self, id: &str) -> Vec<Value> {
        let (status, page) = self.get(&format!("/sessions/{id}/events?from=0")).await;
        assert_eq!(status, StatusCode::OK, "{page}");
        page["events"].as_array().unwrap().clone()
    }

    pub async fn view(&self, id: &str) -> Value {
        let (status, v) = self.get(&format!("/sessions/{id}")).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        v
    }

    /// Plays to the end: the human speaks `line` in `chunk_ms` batches and
    /// opponents move on one-second ticks.
    pub async fn play_out(&self, id: &str, line: &str, chunk_ms: u64) {
        for _ in 0..10_000 {
            let v = self.view(id).await;
            if v["status"] == "ended" {
                return;
            }
            if v["awaiting_human"] == true {
                let (status, body) = self
                    .post(&format!("/sessions/{id}/speech"), json!({ "text": line, "duration_ms": chunk_ms }))
                    .await;
                assert_eq!(status, StatusCode::OK, "{body}");
            } else {
                let st = self.state.clone();
                tokio::task::spawn_blocking(move || st.tick(1000)).await.unwrap();
            }
        }
        panic!("game did not finish");
    }
}

fn open(dir: &TempDir) -> (Arc<AppState>, Router) {
    let config = ServiceConfig {
        data_dir: dir.path().to_path_buf(),
        fixtures_dir: Some(fixtures_dir()),
        ..ServiceConfig::default()
    };
    let state = AppState::open(config).unwrap();
    let app = router(state.clone());
    (state, app)
}

/// Opponents that speak but never challenge.
pub fn passive(seed: u64) -> Value {
    json!({
        "rng_seed": seed,
        "rounds_per_game": 2,
        "num_ai_players": 2,
        "round_duration_ms": 20000,
        "topics": ["My Pet", "The Sea"],
        "difficulty": {
            "preset": "relaxed",
            "challenge_aggressiveness": [0.0, 0.0],
            "false_challenge_rate": [0.0, 0.0],
        },
    })
}

/// Opponents that challenge every violation they see.
pub fn eager(seed: u64) -> Value {
    json!({
        "rng_seed": seed,
        "rounds_per_game": 2,
        "num_ai_players": 2,
        "topics": ["My Pet", "The Sea"],
        "difficulty": {
            "preset": "standard",
            "user_violation_grace": 0,
            "challenge_aggressiveness": [1.0, 1.0],
            "false_challenge_rate": [0.0, 0.0],
        },
    })
}

pub fn of_type<'a>(events: &'a [Value], ty: &'a str) -> impl Iterator<Item = &'a Value> + 'a {
    events.iter().filter(move |e| e["type"] == ty)
}

pub fn seqs(events: &[Value]) -> Vec<u64> {
    events.iter().map(|e| e["seq"].as_u64().unwrap()).collect()
}
