//! A local stand-in for an OpenAI-compatible completions server, for tests
//! and offline demos.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use url::Url;

pub const COMPLETIONS_PATH: &str = "/v1/completions";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubMode {
    /// Answers every request with this completion text.
    Canned(String),
    /// Answers with this HTTP status and a short error body.
    Status(u16),
    /// Waits this long before answering with an empty canned text.
    Stall(Duration),
    /// Answers 200 with a body lacking `choices`.
    Malformed,
}

#[derive(Clone)]
struct StubState {
    mode: Arc<Mutex<StubMode>>,
    requests: Arc<Mutex<Vec<Value>>>,
}

async fn completions(State(st): State<StubState>, Json(body): Json<Value>) -> Response {
    st.requests.lock().expect("stub lock").push(body);
    let mode = st.mode.lock().expect("stub lock").clone();
    match mode {
        StubMode::Canned(text) => Json(json!({
            "id": "stub-1",
            "object": "text_completion",
            "choices": [{"index": 0, "text": text, "finish_reason": "stop"}],
        }))
        .into_response(),
        StubMode::Status(code) => {
            let code = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (code, Json(json!({"error": {"message": "stub failure"}}))).into_response()
        }
        StubMode::Stall(d) => {
            tokio::time::sleep(d).await;
            Json(json!({"choices": [{"index": 0, "text": ""}]})).into_response()
        }
        StubMode::Malformed => Json(json!({"object": "text_completion"})).into_response(),
    }
}

pub struct StubServer {
    addr: SocketAddr,
    mode: Arc<Mutex<StubMode>>,
    requests: Arc<Mutex<Vec<Value>>>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl StubServer {
    /// Serves on a free loopback port.
    pub async fn spawn(mode: StubMode) -> std::io::Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
        let addr = listener.local_addr()?;
        let state = StubState {
            mode: Arc::new(Mutex::new(mode)),
            requests: Arc::new(Mutex::new(Vec::new())),
        };
        let app = Router::new()
            .route(COMPLETIONS_PATH, post(completions))
            .with_state(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            mode: state.mode,
            requests: state.requests,
            shutdown: Some(tx),
        })
    }

    pub fn endpoint(&self) -> Url {
        Url::parse(&format!("http://{}{COMPLETIONS_PATH}", self.addr)).expect("valid url")
    }

    pub fn set_mode(&self, mode: StubMode) {
        *self.mode.lock().expect("stub lock") = mode;
    }

    /// Request bodies received so far, oldest first.
    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().expect("stub lock").clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
