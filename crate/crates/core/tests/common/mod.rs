#![allow(dead_code)]

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use hqeval::model::{Entry, GeoHint, PlatformKind};
use serde_json::{json, Value};

/// One scripted reply: a status and, for 200, the assistant text.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub text: String,
}

impl Reply {
    pub fn ok(text: impl Into<String>) -> Self {
        Self { status: 200, text: text.into() }
    }

    pub fn status(status: u16) -> Self {
        Self { status, text: format!("stub error {status}") }
    }
}

#[derive(Debug)]
pub struct StubState {
    script: Mutex<VecDeque<Reply>>,
    fallback: Reply,
    delay: Duration,
    hits: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    authorization: Mutex<Vec<Option<String>>>,
    bodies: Mutex<Vec<Value>>,
}

impl StubState {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn authorization(&self) -> Vec<Option<String>> {
        self.authorization.lock().unwrap().clone()
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.bodies.lock().unwrap().clone()
    }
}

/// Chat-completion stub on a loopback port, served from its own thread.
pub struct Stub {
    pub base_url: String,
    pub state: Arc<StubState>,
}

impl Stub {
    /// Serves `script` in order, then `fallback` forever.
    pub fn start(script: Vec<Reply>, fallback: Reply, delay: Duration) -> Self {
        let state = Arc::new(StubState {
            script: Mutex::new(script.into()),
            fallback,
            delay,
            hits: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            authorization: Mutex::new(Vec::new()),
            bodies: Mutex::new(Vec::new()),
        });
        let app = Router::new().route("/v1/chat/completions", post(handle)).with_state(state.clone());
        let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
        std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv().expect("stub server starts");
        Self { base_url: format!("http://{addr}/v1"), state }
    }

    pub fn always(reply: Reply) -> Self {
        Self::start(Vec::new(), reply, Duration::ZERO)
    }
}

async fn handle(State(state): State<Arc<StubState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    state.hits.fetch_add(1, Ordering::SeqCst);
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.peak.fetch_max(now, Ordering::SeqCst);
    state
        .authorization
        .lock()
        .unwrap()
        .push(headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string));
    state.bodies.lock().unwrap().push(body);
    let reply = state.script.lock().unwrap().pop_front().unwrap_or_else(|| state.fallback.clone());
    if !state.delay.is_zero() {
        tokio::time::sleep(state.delay).await;
    }
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    let status = StatusCode::from_u16(reply.status).unwrap();
    if reply.status == 200 {
        let envelope = json!({
            "id": "stub",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": reply.text}, "finish_reason": "stop"}],
        });
        (status, Json(envelope)).into_response()
    } else {
        (status, reply.text).into_response()
    }
}

pub fn entry(id: &str, text: &str) -> Entry {
    Entry {
        id: id.into(),
        platform: PlatformKind::Microblog.into(),
        timestamp: DateTime::<Utc>::from_timestamp(1_690_000_000, 0).unwrap(),
        text: text.into(),
        geo_hint: GeoHint::None,
    }
}

/// A combined-task answer with one parking unit, wrapped in chatty prose.
pub const PROSE_WRAPPED: &str = "Sure, here is what I found in the post.\n\n```json\n{\"relevant\": true, \"units\": [{\"object\": \"parking lot\", \"content\": \"always full\", \"indicator\": \"4.1\", \"sentiment\": -1},]}\n```\n\nLet me know if you need anything else.";
