//! HTTP/JSON facade over [`Manager`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use vsn_core::feature_model::FeatureConfiguration;
use vsn_core::management::{ManageError, Manager, MessageRequest};

type Shared = Arc<Manager>;

/// Error body shared by every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

struct Failure(ManageError);

impl From<ManageError> for Failure {
    fn from(e: ManageError) -> Self {
        Failure(e)
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let e = self.0;
        let (status, code, details) = match &e {
            ManageError::UnknownTenant(_) => (StatusCode::NOT_FOUND, "UnknownTenant", None),
            ManageError::NoConfiguration { .. } => (StatusCode::NOT_FOUND, "NoConfiguration", None),
            ManageError::DuplicateTenant(_) => (StatusCode::CONFLICT, "DuplicateTenant", None),
            ManageError::VersionConflict { actual, .. } => {
                (StatusCode::CONFLICT, "VersionConflict", Some(json!({ "currentVersion": actual })))
            }
            ManageError::Invalid(result) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "InvalidConfiguration",
                Some(json!(result)),
            ),
            ManageError::ActionFailed(err) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                "ActionFailed",
                Some(json!({ "rule": err.rule, "action": err.action, "report": err.report })),
            ),
            ManageError::Network(_) => (StatusCode::BAD_REQUEST, "InvalidMessage", None),
            ManageError::Control(_) => (StatusCode::INTERNAL_SERVER_ERROR, "ControlError", None),
            ManageError::Persist(_) => (StatusCode::INTERNAL_SERVER_ERROR, "PersistError", None),
        };
        let body = ApiError {
            error: code.to_string(),
            message: e.to_string(),
            details,
        };
        (status, Json(body)).into_response()
    }
}

/// Configuration bodies may be wrapped as `{"configuration": ...}` or bare.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ConfigurationBody {
    Wrapped { configuration: FeatureConfiguration },
    Bare(FeatureConfiguration),
}

impl ConfigurationBody {
    fn into_inner(self) -> FeatureConfiguration {
        match self {
            ConfigurationBody::Wrapped { configuration } | ConfigurationBody::Bare(configuration) => configuration,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct NewTenant {
    tenant_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PutQuery {
    expected_version: Option<u64>,
}

type Reply<T> = Result<T, Failure>;

async fn model(State(m): State<Shared>) -> impl IntoResponse {
    Json(m.model().clone())
}

async fn validate(State(m): State<Shared>, Json(body): Json<ConfigurationBody>) -> impl IntoResponse {
    Json(m.validate(&body.into_inner()))
}

async fn list_tenants(State(m): State<Shared>) -> impl IntoResponse {
    Json(m.tenants())
}

async fn create_tenant(State(m): State<Shared>, Json(body): Json<NewTenant>) -> Reply<impl IntoResponse> {
    Ok((StatusCode::CREATED, Json(m.create_tenant(&body.tenant_id)?)))
}

async fn get_configuration(State(m): State<Shared>, Path(id): Path<String>) -> Reply<impl IntoResponse> {
    Ok(Json(m.configuration(&id)?))
}

async fn put_configuration(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<PutQuery>,
    Json(body): Json<ConfigurationBody>,
) -> Reply<impl IntoResponse> {
    Ok(Json(m.apply_configuration(&id, body.into_inner(), q.expected_version)?))
}

async fn delete_configuration(State(m): State<Shared>, Path(id): Path<String>) -> Reply<impl IntoResponse> {
    m.teardown(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn vsn(State(m): State<Shared>, Path(id): Path<String>) -> Reply<impl IntoResponse> {
    Ok(Json(m.vsn(&id)?))
}

async fn messages(
    State(m): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<MessageRequest>,
) -> Reply<impl IntoResponse> {
    Ok(Json(m.inject(&id, body)?))
}

async fn network(State(m): State<Shared>) -> impl IntoResponse {
    Json(m.network().topology().clone())
}

async fn metrics(State(m): State<Shared>) -> impl IntoResponse {
    Json(m.metrics())
}

pub fn router(manager: Arc<Manager>) -> Router {
    Router::new()
        .route("/model", get(model))
        .route("/validate", post(validate))
        .route("/tenants", get(list_tenants).post(create_tenant))
        .route(
            "/tenants/{id}/configuration",
            get(get_configuration).put(put_configuration).delete(delete_configuration),
        )
        .route("/tenants/{id}/vsn", get(vsn))
        .route("/tenants/{id}/messages", post(messages))
        .route("/network", get(network))
        .route("/metrics/customization", get(metrics))
        .with_state(manager)
}

/// A server running on a background thread; dropping it shuts it down.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves on a background thread.
pub fn spawn(manager: Arc<Manager>, addr: SocketAddr) -> std::io::Result<RunningServer> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(manager);
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves until Ctrl-C.
pub fn serve_forever(manager: Arc<Manager>, addr: SocketAddr) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(manager))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
