//! HTTP and WebSocket interface for the operator console.

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use holocell::protocol::{parse_product, Message, ServiceDef};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::engine::{EngineError, EngineHandle};

pub struct ApiError(StatusCode, &'static str, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1, "detail": self.2 }))).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::UnknownProduct(p) => ApiError(StatusCode::NOT_FOUND, "UnknownProduct", p),
            EngineError::Rejected(r) => {
                ApiError(StatusCode::UNPROCESSABLE_ENTITY, "OrderRejected", r)
            }
            EngineError::Stopped => {
                ApiError(StatusCode::SERVICE_UNAVAILABLE, "Stopped", e.to_string())
            }
            EngineError::Internal(m) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, "Internal", m),
        }
    }
}

fn bad_request(detail: impl ToString) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, "BadRequest", detail.to_string())
}

fn not_found(what: &'static str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, what, id.to_string())
}

type ApiResult = Result<Response, ApiError>;

pub fn router(engine: EngineHandle) -> Router {
    Router::new()
        .route("/api/products", post(define_product))
        .route("/api/services", post(define_services))
        .route("/api/orders", post(submit_order).get(list_orders))
        .route("/api/orders/{id}", get(order))
        .route("/api/holons", get(holons))
        .route("/api/holons/{id}/gantt", get(gantt))
        .route("/api/directory", get(directory))
        .route("/api/events", get(events))
        .with_state(engine)
}

async fn define_product(State(engine): State<EngineHandle>, body: String) -> ApiResult {
    let spec = parse_product(&body).map_err(bad_request)?;
    let name = spec.name.clone();
    engine.define_product(spec).await?;
    Ok((StatusCode::CREATED, Json(json!({ "name": name }))).into_response())
}

/// Accepts a `<Services>` document or a single `<Service>`.
async fn define_services(State(engine): State<EngineHandle>, body: String) -> ApiResult {
    let root = Message::from_xml(&body).map_err(bad_request)?;
    let defs = if root.type_name == "Services" {
        root.children
            .iter()
            .map(ServiceDef::from_message)
            .collect::<Result<Vec<_>, _>>()
    } else {
        ServiceDef::from_message(&root).map(|d| vec![d])
    }
    .map_err(bad_request)?;
    let ids: Vec<String> = defs.iter().map(|d| d.serv_id.clone()).collect();
    engine.define_services(defs).await?;
    Ok((StatusCode::CREATED, Json(json!({ "services": ids }))).into_response())
}

#[derive(Deserialize)]
struct OrderRequest {
    product: String,
}

async fn submit_order(
    State(engine): State<EngineHandle>,
    Json(req): Json<OrderRequest>,
) -> ApiResult {
    let id = engine.submit_order(req.product).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id }))).into_response())
}

async fn list_orders(State(engine): State<EngineHandle>) -> Json<serde_json::Value> {
    let shared = engine.shared.lock().unwrap();
    Json(json!(shared.model.orders().collect::<Vec<_>>()))
}

async fn order(State(engine): State<EngineHandle>, Path(id): Path<String>) -> ApiResult {
    let shared = engine.shared.lock().unwrap();
    let tree = shared
        .model
        .order_tree(&id)
        .ok_or_else(|| not_found("UnknownOrder", &id))?;
    Ok(Json(tree).into_response())
}

async fn holons(State(engine): State<EngineHandle>) -> Json<serde_json::Value> {
    let shared = engine.shared.lock().unwrap();
    Json(json!(shared.model.census()))
}

async fn gantt(State(engine): State<EngineHandle>, Path(id): Path<String>) -> ApiResult {
    let shared = engine.shared.lock().unwrap();
    let bars = shared
        .model
        .gantt(&id)
        .ok_or_else(|| not_found("UnknownHolon", &id))?;
    Ok(Json(bars).into_response())
}

async fn directory(State(engine): State<EngineHandle>) -> ApiResult {
    Ok(Json(engine.directory().await?).into_response())
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

/// Streams frames with `seq > since` as JSON text messages: the backlog
/// first, then live frames.
async fn events(
    State(engine): State<EngineHandle>,
    Query(q): Query<Since>,
    ws: WebSocketUpgrade,
) -> Response {
    ws.on_upgrade(move |socket| stream(socket, engine, q.since))
}

async fn stream(mut socket: WebSocket, engine: EngineHandle, since: u64) {
    let (backlog, mut live) = {
        let shared = engine.shared.lock().unwrap();
        let backlog: Vec<_> = shared
            .log
            .iter()
            .filter(|f| f.seq > since)
            .cloned()
            .collect();
        (backlog, engine.events.subscribe())
    };
    let mut last = since;
    for f in backlog {
        last = f.seq;
        let text = serde_json::to_string(&f).expect("frame serializes");
        if socket.send(WsMessage::Text(text.into())).await.is_err() {
            return;
        }
    }
    loop {
        let f = match live.recv().await {
            Ok(f) => f,
            Err(RecvError::Lagged(_)) => continue,
            Err(RecvError::Closed) => return,
        };
        if f.seq <= last {
            continue;
        }
        last = f.seq;
        let text = serde_json::to_string(&f).expect("frame serializes");
        if socket.send(WsMessage::Text(text.into())).await.is_err() {
            return;
        }
    }
}
