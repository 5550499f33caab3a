//! HTTP service: `POST /search` and `GET /health`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dsx_core::engine::Engine;

use crate::api::{ErrorBody, Health, SearchRequest, SearchResponse};

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/health", get(health))
        .with_state(engine)
}

async fn health(State(engine): State<Arc<Engine>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        corpus: engine.corpus.len(),
    })
}

async fn search(State(engine): State<Arc<Engine>>, Json(req): Json<SearchRequest>) -> Response {
    let outcome = tokio::task::spawn_blocking(move || {
        let config = req.config(&engine.defaults);
        engine.search(&req.query(), &config)
    })
    .await;
    match outcome {
        Ok(Ok(o)) => Json(SearchResponse::from(o)).into_response(),
        Ok(Err(e)) => {
            let (body, client) = ErrorBody::from_engine(&e);
            let status = if client {
                StatusCode::BAD_REQUEST
            } else {
                StatusCode::INTERNAL_SERVER_ERROR
            };
            (status, Json(body)).into_response()
        }
        Err(e) => {
            log::error!("search task failed: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(ErrorBody::message("search failed"))).into_response()
        }
    }
}

pub async fn serve(engine: Arc<Engine>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine)).await
}
