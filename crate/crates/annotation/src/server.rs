//! HTTP+JSON front end over a [`TaskStore`].

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;

use crate::error::AnnotateError;
use crate::store::{TaskStore, TaskSubmission};

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        let status = match &self {
            AnnotateError::UnknownTask(_) | AnnotateError::UnknownImage(_) => StatusCode::NOT_FOUND,
            AnnotateError::Conflict { .. } => StatusCode::CONFLICT,
            AnnotateError::Rejected { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotateError::BadRequest(_) => StatusCode::BAD_REQUEST,
            AnnotateError::Core(hoidet::Error::MissingImage(_)) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        let rule = match &self {
            AnnotateError::Rejected { rule, .. } => Some(*rule),
            _ => None,
        };
        (status, Json(json!({ "error": self.to_string(), "rule": rule }))).into_response()
    }
}

type Shared = Arc<TaskStore>;
type ApiResult<T> = Result<T, AnnotateError>;

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_task(State(store): State<Shared>, Query(q): Query<NextQuery>) -> ApiResult<Response> {
    let annotator = q.annotator.unwrap_or_default();
    Ok(Json(store.next_task(&annotator)?).into_response())
}

async fn submit(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<TaskSubmission>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let Json(mut sub) = body.map_err(|e| AnnotateError::BadRequest(e.body_text()))?;
    if sub.task_id.is_empty() {
        sub.task_id = id;
    } else if sub.task_id != id {
        return Err(AnnotateError::BadRequest(format!(
            "body names task `{}` but the URL names `{id}`",
            sub.task_id
        )));
    }
    Ok(Json(store.submit(sub)?).into_response())
}

async fn image(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let png = store.image_png(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn export(State(store): State<Shared>) -> ApiResult<Response> {
    let text = store.export()?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn progress(State(store): State<Shared>) -> Response {
    Json(store.progress()).into_response()
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/submit", post(submit))
        .route("/images/{id}", get(image))
        .route("/export", get(export))
        .route("/progress", get(progress))
        .with_state(store)
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    /// Stop accepting connections and wait for the server thread.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    /// Block until the server exits on its own.
    pub fn join(mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Bind `addr` (port 0 picks a free port) and serve `store` until stopped.
pub fn spawn(store: Shared, addr: SocketAddr, workers: usize) -> std::io::Result<ServerHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(workers.max(1))
        .enable_all()
        .build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(store);
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    log::info!("annotation service listening on http://{addr}");
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
