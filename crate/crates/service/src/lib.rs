//! HTTP+JSON service over the scenario store and the optics engine.
//!
//! Every failure is answered with an [`ApiError`] envelope. Heavy work
//! (radiance, rendering, tracing) runs on the blocking pool against a snapshot
//! of the scenario, so the store lock is only held for reads and appends.

pub mod engine;
pub mod error;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use tokio::net::TcpListener;

use liveia_core::radiance::RadianceParams;
use liveia_core::render::RenderMode;
use liveia_core::scene::{deserialize, Scenario};
use liveia_store::Store;

pub use error::{ApiError, ErrorCode};

pub const DEFAULT_PORT: u16 = 8642;
pub const SVG_CONTENT_TYPE: &str = "image/svg+xml";
pub const PPM_CONTENT_TYPE: &str = "image/x-portable-pixmap";
pub const DIGEST_HEADER: &str = "x-content-digest";

type ApiResult<T> = Result<T, ApiError>;
type Params = Query<HashMap<String, String>>;

#[derive(Clone)]
pub struct AppState {
    store: Arc<RwLock<Store>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState { store: Arc::new(RwLock::new(store)) }
    }

    fn read<T>(&self, f: impl FnOnce(&Store) -> ApiResult<T>) -> ApiResult<T> {
        let guard = self.store.read().map_err(|_| ApiError::internal("store lock poisoned"))?;
        f(&guard)
    }

    fn write<T>(&self, f: impl FnOnce(&mut Store) -> ApiResult<T>) -> ApiResult<T> {
        let mut guard = self.store.write().map_err(|_| ApiError::internal("store lock poisoned"))?;
        f(&mut guard)
    }

    fn scenario(&self, id: &str) -> ApiResult<Scenario> {
        self.read(|s| Ok(s.get_scenario(id)?))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/scenarios", post(create).get(list))
        .route("/scenarios/{id}", get(fetch).put(replace).delete(remove))
        .route("/scenarios/{id}/fork", post(fork))
        .route("/scenarios/{id}/trace", post(trace))
        .route("/scenarios/{id}/radiance", get(radiance))
        .route("/scenarios/{id}/render", get(render))
        .route("/scenarios/{id}/frames", get(frames))
        .route("/scenarios/{id}/similar", get(similar))
        .route("/scenarios/{id}/suggest", get(suggest))
        .route("/timeline/{root}", get(timeline))
        .route("/waves/superpose", post(superpose))
        .route("/waves/decompose", post(decompose))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async { ApiError::not_found("method not supported on this route") })
        .with_state(state)
}

/// Serves the API on `listener` until Ctrl-C.
pub async fn serve(listener: TcpListener, store: Store) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Opens the store in `data_dir` and serves on `0.0.0.0:port`.
pub async fn run(port: u16, data_dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let store = Store::open(data_dir)?;
    let listener = TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    eprintln!("liveia listening on {}", listener.local_addr()?);
    serve(listener, store).await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn body_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("bad request body: {e}")))
}

fn body_document(body: &[u8]) -> ApiResult<Scenario> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::validation("body is not UTF-8"))?;
    Ok(deserialize(text)?)
}

fn param<T: FromStr>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>> {
    q.get(key)
        .map(|v| v.parse().map_err(|_| ApiError::validation(format!("bad value for {key}: {v:?}"))))
        .transpose()
}

fn binary(content_type: &'static str, body: impl Into<axum::body::Body>) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body.into()).into_response()
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list(State(st): State<AppState>) -> ApiResult<Json<serde_json::Value>> {
    st.read(|s| Ok(Json(json!({ "ids": s.ids() }))))
}

async fn create(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let scenario = body_document(&body)?;
    let digest = st.write(|s| {
        if s.contains(&scenario.id) {
            return Err(ApiError::new(ErrorCode::Version, format!("scenario {} already exists", scenario.id)));
        }
        Ok(s.put(&scenario)?)
    })?;
    let mut resp = (StatusCode::CREATED, Json(json!({ "id": scenario.id, "digest": digest }))).into_response();
    if let Ok(loc) = HeaderValue::from_str(&format!("/scenarios/{}", scenario.id)) {
        resp.headers_mut().insert(header::LOCATION, loc);
    }
    Ok(resp)
}

async fn fetch(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let (doc, digest) = st.read(|s| Ok((s.get(&id)?, s.digest(&id)?)))?;
    let mut resp = binary("application/json", doc);
    if let Ok(v) = HeaderValue::from_str(&digest) {
        resp.headers_mut().insert(DIGEST_HEADER, v);
    }
    Ok(resp)
}

async fn replace(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let scenario = body_document(&body)?;
    if scenario.id != id {
        return Err(ApiError::validation(format!("document id {} does not match path id {id}", scenario.id)));
    }
    let digest = st.write(|s| {
        if !s.contains(&id) {
            return Err(ApiError::not_found(format!("scenario {id} not found")));
        }
        Ok(s.put(&scenario)?)
    })?;
    Ok(Json(json!({ "id": id, "digest": digest })))
}

async fn remove(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<StatusCode> {
    st.write(|s| Ok(s.delete(&id)?))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn fork(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let child = st.write(|s| Ok(s.fork(&id)?))?;
    Ok((StatusCode::CREATED, Json(json!({ "id": child.id, "parent": id }))).into_response())
}

async fn trace(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<engine::TraceResponse>> {
    let req: engine::TraceRequest = body_json(&body)?;
    let scenario = st.scenario(&id)?;
    Ok(Json(blocking(move || engine::trace(&scenario, &req)).await?))
}

fn radiance_params(q: &HashMap<String, String>) -> ApiResult<RadianceParams> {
    let mut p = RadianceParams::with_seed(param(q, "seed")?.unwrap_or(0));
    if let Some(v) = param(q, "rays")? {
        p.rays_per_iter = v;
    }
    if let Some(v) = param(q, "resolution")? {
        p.resolution = v;
    }
    if let Some(v) = param(q, "tol")? {
        p.tol = v;
    }
    if let Some(v) = param(q, "max_iter")? {
        p.max_iter = v;
    }
    Ok(p)
}

fn sphere_param(s: &Scenario, q: &HashMap<String, String>, key: &str) -> ApiResult<String> {
    match q.get(key) {
        Some(id) => Ok(id.clone()),
        None => s
            .spheres
            .first()
            .map(|x| x.id.clone())
            .ok_or_else(|| ApiError::validation("scenario has no spheres")),
    }
}

async fn radiance(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<serde_json::Value>> {
    let scenario = st.scenario(&id)?;
    let params = radiance_params(&q)?;
    let sphere = sphere_param(&scenario, &q, "sphere")?;
    Ok(Json(blocking(move || engine::radiance_document(&scenario, &sphere, &params)).await?))
}

async fn render(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Params) -> ApiResult<Response> {
    let mode = engine::parse_mode(q.get("mode").map(String::as_str))?;
    let (scenario, ancestors, descendants) = st.read(|s| {
        let scenario = s.get_scenario(&id)?;
        if mode == RenderMode::Overview {
            Ok((scenario, s.ancestors(&id)?, s.descendants(&id)?))
        } else {
            Ok((scenario, Vec::new(), Vec::new()))
        }
    })?;
    match q.get("format").map(String::as_str).unwrap_or("svg") {
        "svg" => {
            let focus = q.get("focus").cloned();
            let svg = blocking(move || {
                engine::render_svg(&scenario, mode, focus.as_deref(), &ancestors, &descendants)
            })
            .await?;
            Ok(binary(SVG_CONTENT_TYPE, svg))
        }
        "ppm" => {
            let params = radiance_params(&q)?;
            let key = if q.contains_key("sphere") { "sphere" } else { "focus" };
            let sphere = sphere_param(&scenario, &q, key)?;
            let ppm = blocking(move || engine::radiance_ppm(&scenario, &sphere, &params)).await?;
            Ok(binary(PPM_CONTENT_TYPE, ppm))
        }
        other => Err(ApiError::validation(format!("unknown format {other:?}"))),
    }
}

async fn frames(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<serde_json::Value>> {
    let steps: usize = param(&q, "steps")?.ok_or_else(|| ApiError::validation("steps is required"))?;
    let scenario = st.scenario(&id)?;
    let frames = blocking(move || engine::frames(&scenario, steps)).await?;
    Ok(Json(json!({ "steps": steps, "content_type": SVG_CONTENT_TYPE, "frames": frames })))
}

fn k_param(q: &HashMap<String, String>) -> ApiResult<usize> {
    Ok(param(q, "k")?.unwrap_or(5))
}

async fn similar(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<serde_json::Value>> {
    let k = k_param(&q)?;
    st.read(|s| Ok(Json(json!({ "id": id, "similar": s.similar(&id, k)? }))))
}

async fn suggest(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Params,
) -> ApiResult<Json<serde_json::Value>> {
    let k = k_param(&q)?;
    st.read(|s| Ok(Json(json!({ "id": id, "suggestions": s.suggest(&id, k)? }))))
}

async fn timeline(State(st): State<AppState>, UrlPath(root): UrlPath<String>) -> ApiResult<Json<liveia_store::TimelineNode>> {
    st.read(|s| Ok(Json(s.timeline(&root)?)))
}

async fn superpose(body: Bytes) -> ApiResult<Json<engine::SuperposeResponse>> {
    let req: engine::SuperposeRequest = body_json(&body)?;
    Ok(Json(engine::superpose_request(&req)?))
}

async fn decompose(body: Bytes) -> ApiResult<Json<engine::DecomposeResponse>> {
    let req: engine::DecomposeRequest = body_json(&body)?;
    Ok(Json(blocking(move || engine::decompose_request(&req)).await?))
}
