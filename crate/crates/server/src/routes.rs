use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use restograph::labeling::{Indicator, VoteOutcome};
use serde::Deserialize;
use serde_json::json;
use tower::ServiceExt as _;
use tower_http::services::{ServeDir, ServeFile};

use crate::service::{Labeling, ServerConfig, VoteError};

type Shared = Arc<Labeling>;

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "accepted": false, "error": message.into() }))).into_response()
}

#[derive(Deserialize)]
struct PairQuery {
    indicator: Option<String>,
}

async fn pair(State(svc): State<Shared>, Query(q): Query<PairQuery>) -> Response {
    let indicator = match q.indicator.as_deref().filter(|s| !s.is_empty()).map(str::parse::<Indicator>) {
        None => None,
        Some(Ok(i)) => Some(i),
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match svc.next_pair(indicator) {
        Ok(view) => Json(view).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Deserialize)]
struct VoteBody {
    pair_id: String,
    outcome: VoteOutcome,
}

async fn vote(State(svc): State<Shared>, body: Result<Json<VoteBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    // the ledger fsync blocks, so keep it off the async workers
    let result = tokio::task::spawn_blocking(move || svc.vote(&body.pair_id, body.outcome)).await;
    match result {
        Ok(Ok(progress)) => Json(json!({ "accepted": true, "progress": progress })).into_response(),
        Ok(Err(VoteError::Conflict(m))) => error(StatusCode::CONFLICT, m),
        Ok(Err(VoteError::Unavailable(m))) => error(StatusCode::SERVICE_UNAVAILABLE, m),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn progress(State(svc): State<Shared>) -> Response {
    Json(svc.progress()).into_response()
}

async fn scores(State(svc): State<Shared>) -> Response {
    Json(svc.scores()).into_response()
}

async fn image(State(svc): State<Shared>, Path(id): Path<String>, req: Request) -> Response {
    let Some(path) = svc.image_path(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown image {id}"));
    };
    match ServeFile::new(path).oneshot(req).await {
        Ok(r) => r.into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Builds the application router around a shared service.
pub fn router(svc: Shared, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api/pair", get(pair))
        .route("/api/vote", post(vote))
        .route("/api/progress", get(progress))
        .route("/api/scores", get(scores))
        .route("/api/images/{id}", get(image))
        .with_state(svc);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Opens the service and serves it until the process is stopped.
pub async fn serve(cfg: ServerConfig, addr: SocketAddr) -> restograph::Result<()> {
    let svc = Arc::new(Labeling::open(&cfg)?);
    let app = router(svc, cfg.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("rating service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
