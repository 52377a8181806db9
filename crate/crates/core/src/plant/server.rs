//! HTTP service exposing the simulated plant's skills and functionalities.
//!
//! All mutations go through one mutex, so concurrent requests are totally
//! ordered and the returned `state_version` reflects that order.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{Fault, PlantState};
use crate::registry::Registry;

/// Body of every mutating endpoint's reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ServiceReply {
    Ok { state_version: u64 },
    Fault { reason: String },
}

#[derive(Clone)]
struct AppState {
    registry: Arc<Registry>,
    plant: Arc<Mutex<PlantState>>,
}

#[derive(Debug, Default, Deserialize)]
struct FunctionalityBody {
    #[serde(default)]
    params: Map<String, Value>,
}

#[derive(Debug, Deserialize)]
struct SkillBody {
    workpiece_id: String,
    #[serde(default)]
    detail: Option<String>,
}

fn reply(result: Result<u64, Fault>) -> Response {
    match result {
        Ok(v) => (StatusCode::OK, Json(ServiceReply::Ok { state_version: v })).into_response(),
        Err(f) => (
            StatusCode::CONFLICT,
            Json(ServiceReply::Fault { reason: f.reason }),
        )
            .into_response(),
    }
}

fn not_found(what: String) -> Response {
    (StatusCode::NOT_FOUND, Json(ServiceReply::Fault { reason: what })).into_response()
}

fn bad_request(what: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(ServiceReply::Fault { reason: what })).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, String> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| format!("malformed body: {e}"))
}

/// Applies `f` under the plant lock, committing only on success.
fn mutate(
    app: &AppState,
    f: impl FnOnce(&PlantState) -> Result<PlantState, Fault>,
) -> Result<u64, Fault> {
    let mut guard = app.plant.lock().expect("plant lock poisoned");
    let next = f(&guard)?;
    let version = next.version;
    *guard = next;
    Ok(version)
}

async fn functionality(
    State(app): State<AppState>,
    Path((module_id, name)): Path<(String, String)>,
    body: Bytes,
) -> Response {
    let Some(module) = app.registry.module(&module_id) else {
        return not_found(format!("unknown module {module_id}"));
    };
    let body: FunctionalityBody = match parse_body(&body) {
        Ok(b) => b,
        Err(e) => return bad_request(e),
    };
    if module.functionalities().all(|f| f.name != name) {
        return reply(Err(Fault {
            reason: format!("unknown functionality {name}"),
        }));
    }
    tracing::debug!(module = %module_id, %name, "functionality call");
    reply(mutate(&app, |s| {
        s.apply_functionality(&app.registry, &name, &body.params)
    }))
}

async fn skill(
    State(app): State<AppState>,
    Path((module_id, code)): Path<(String, String)>,
    body: Bytes,
) -> Response {
    let Some(module) = app.registry.module(&module_id) else {
        return not_found(format!("unknown module {module_id}"));
    };
    let body: SkillBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return bad_request(format!("malformed body: {e}")),
    };
    if module.skills.iter().all(|s| s.code != code) {
        return reply(Err(Fault {
            reason: format!("skill {code} is not offered by {}", module.name),
        }));
    }
    tracing::debug!(module = %module_id, %code, workpiece = %body.workpiece_id, "skill call");
    reply(mutate(&app, |s| {
        s.apply_skill(&app.registry, &code, &body.workpiece_id, body.detail.as_deref())
    }))
}

async fn plant_state(State(app): State<AppState>) -> Json<PlantState> {
    Json(app.plant.lock().expect("plant lock poisoned").clone())
}

async fn module_state(
    State(app): State<AppState>,
    Path(module_id): Path<String>,
) -> Response {
    if app.registry.module(&module_id).is_none() {
        return not_found(format!("unknown module {module_id}"));
    }
    let plant = app.plant.lock().expect("plant lock poisoned");
    let robot_here = plant.robot.position.as_deref() == Some(module_id.as_str());
    Json(json!({
        "module_id": module_id,
        "workpiece": plant.workpiece_at(&module_id),
        "robot_docked_here": robot_here && plant.robot.docked,
        "state_version": plant.version,
    }))
    .into_response()
}

/// Builds the plant router over shared state.
pub fn router(registry: Arc<Registry>, plant: Arc<Mutex<PlantState>>) -> Router {
    Router::new()
        .route("/plant/state", get(plant_state))
        .route("/{module_id}/state", get(module_state))
        .route("/{module_id}/functionalities/{name}", post(functionality))
        .route("/{module_id}/functionality/{name}", post(functionality))
        .route("/{module_id}/skills/{code}", post(skill))
        .with_state(AppState { registry, plant })
}

/// A plant service running on a background task.
pub struct PlantServer {
    addr: SocketAddr,
    plant: Arc<Mutex<PlantState>>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl PlantServer {
    /// Binds `addr` (port 0 picks a free port) and serves until dropped or
    /// [`PlantServer::shutdown`] is called.
    pub async fn spawn(
        registry: Arc<Registry>,
        initial: PlantState,
        addr: SocketAddr,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let plant = Arc::new(Mutex::new(initial));
        let app = router(registry, plant.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            plant,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> url::Url {
        url::Url::parse(&format!("http://{}", self.addr)).expect("socket address forms a url")
    }

    pub fn snapshot(&self) -> PlantState {
        self.plant.lock().expect("plant lock poisoned").clone()
    }

    /// Replaces the simulated state, as if the plant had been restarted.
    pub fn reset(&self, state: PlantState) {
        *self.plant.lock().expect("plant lock poisoned") = state;
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for PlantServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
