use std::path::{Component, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::{header, request::Parts, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::store::{Dataset, ImageView, Naming};
use crate::AppState;

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Response, ApiError>;

/// JSON body whose rejections are reported as JSON errors.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(r) if r.status() == StatusCode::UNPROCESSABLE_ENTITY => Err(ApiError::Unprocessable(r.body_text())),
            Err(r) => Err(ApiError::BadRequest(r.body_text())),
        }
    }
}

/// Query string whose rejections are reported as JSON errors.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Params(v))
            .map_err(|r| ApiError::Unprocessable(r.body_text()))
    }
}

fn ok(body: Value) -> ApiResult {
    Ok(Json(body).into_response())
}

/// Adds `round` and `dataset_id` to every JSON object response that does
/// not already carry them.
pub async fn stamp(State(state): Shared, response: Response) -> Response {
    let is_json = response
        .headers()
        .get(header::CONTENT_TYPE)
        .is_some_and(|v| v.as_bytes().starts_with(b"application/json"));
    if !is_json {
        return response;
    }
    let (mut parts, body) = response.into_parts();
    let Ok(bytes) = axum::body::to_bytes(body, usize::MAX).await else {
        return StatusCode::INTERNAL_SERVER_ERROR.into_response();
    };
    let Ok(Value::Object(mut obj)) = serde_json::from_slice::<Value>(&bytes) else {
        return Response::from_parts(parts, Body::from(bytes));
    };
    {
        let store = state.store();
        obj.entry("round").or_insert_with(|| Value::from(store.round()));
        obj.entry("dataset_id").or_insert_with(|| json!(store.dataset_id()));
    }
    let bytes = serde_json::to_vec(&obj).expect("object serializes");
    parts.headers.remove(header::CONTENT_LENGTH);
    Response::from_parts(parts, Body::from(bytes))
}

#[derive(Deserialize)]
pub struct RegisterRequest {
    pub dataset_id: Option<String>,
    pub segments: PathBuf,
    #[serde(default = "default_vocabulary")]
    pub vocabulary: String,
    pub embeddings: Option<PathBuf>,
}

fn default_vocabulary() -> String {
    "lvis".into()
}

pub async fn register(State(state): Shared, JsonBody(req): JsonBody<RegisterRequest>) -> ApiResult {
    let id = match req.dataset_id {
        Some(id) => id,
        None => req
            .segments
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| ApiError::Unprocessable("cannot derive a dataset id; pass dataset_id".into()))?,
    };
    if let Some(existing) = state.store().dataset_id() {
        if existing == id {
            return Err(ApiError::conflict(format!("dataset {id:?} is already registered")));
        }
    }
    // Loading may take a while; do it without holding the lock.
    let (segments, vocabulary, embeddings) = (req.segments.clone(), req.vocabulary.clone(), req.embeddings.clone());
    let dataset = tokio::task::spawn_blocking(move || Dataset::load(&id, &segments, &vocabulary, embeddings.as_deref()))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let body = json!({
        "dataset_id": dataset.id,
        "n_images": dataset.images.len(),
        "vocabulary": dataset.vocabulary.name(),
        "n_embeddings": dataset.n_embeddings,
    });
    state.store().register(dataset, req.segments, req.vocabulary, req.embeddings)?;
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

pub async fn status(State(state): Shared) -> ApiResult {
    let store = state.store();
    let n_images = store.dataset().map(|d| d.images.len()).ok();
    ok(json!({
        "n_images": n_images,
        "n_labels": store.labels().len(),
        "n_batches": store.batches().len(),
        "scored": store.scores().is_some(),
        "retraining": state.retraining.load(Ordering::SeqCst),
    }))
}

#[derive(Deserialize)]
pub struct NextParams {
    pub coder: String,
    pub size: usize,
}

pub async fn next_batch(State(state): Shared, Params(p): Params<NextParams>) -> ApiResult {
    let mut store = state.store();
    let batch = store.next_batch(&p.coder, p.size)?;
    let d = store.dataset()?;
    let images = batch
        .plan
        .drawn
        .iter()
        .map(|id| d.image(id).map(|img| ImageView::new(img, false)))
        .collect::<Result<Vec<_>, _>>()?;
    ok(json!({
        "round": batch.round,
        "batch": batch.batch,
        "coder": batch.coder,
        "seed": batch.plan.seed,
        "sampling": if batch.plan.entries.iter().all(|e| e.score.is_some()) { "weighted" } else { "uniform" },
        "images": images,
    }))
}

pub async fn history(State(state): Shared) -> ApiResult {
    let store = state.store();
    ok(json!({ "batches": store.batches() }))
}

#[derive(Deserialize)]
pub struct LabelRequest {
    pub image_id: String,
    pub coder_id: String,
    pub label: i64,
}

pub async fn label(State(state): Shared, JsonBody(req): JsonBody<LabelRequest>) -> ApiResult {
    let record = state.store().add_label(&req.image_id, &req.coder_id, req.label)?;
    ok(json!({
        "image_id": record.image_id,
        "coder_id": record.coder_id,
        "label": record.label.ordinal(),
        "round": record.round,
    }))
}

/// Clears the in-progress flag however the job ends.
struct RetrainGuard(Arc<AppState>);

impl Drop for RetrainGuard {
    fn drop(&mut self) {
        self.0.retraining.store(false, Ordering::SeqCst);
    }
}

pub async fn retrain(State(state): Shared) -> ApiResult {
    if state.retraining.swap(true, Ordering::SeqCst) {
        return Err(ApiError::conflict("a retrain is already running"));
    }
    let _guard = RetrainGuard(state.clone());
    let input = state.store().retrain_input()?;
    let scorer = state.scorer.clone();
    let n_labels = input.n_labels;
    let scoring = tokio::task::spawn_blocking(move || scorer.fit(&input.images, &input.vocabulary, &input.targets))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let (round, report) = state.store().finish_retrain(n_labels, scoring)?;
    ok(json!({ "round": round, "n_labels": n_labels, "report": report }))
}

#[derive(Deserialize)]
pub struct RevealParams {
    #[serde(default)]
    pub reveal: bool,
}

pub async fn segments(State(state): Shared, Path(id): Path<String>, Params(p): Params<RevealParams>) -> ApiResult {
    let view = state.store().image_view(&id, p.reveal)?;
    ok(serde_json::to_value(view).expect("view serializes"))
}

pub async fn naming(State(state): Shared, JsonBody(n): JsonBody<Naming>) -> ApiResult {
    let matched = n.objects.iter().filter(|o| n.matches.get(*o).is_some_and(Option::is_some)).count();
    let body = json!({
        "image_id": n.image_id,
        "coder_id": n.coder_id,
        "named": n.objects.len(),
        "matched": matched,
        "unmatched": n.objects.len() - matched,
    });
    state.store().add_naming(n)?;
    ok(body)
}

pub async fn naming_report(State(state): Shared) -> ApiResult {
    let report = state.store().naming_report(&state.config.dictionary)?;
    ok(serde_json::to_value(report).expect("report serializes"))
}

pub async fn reliability(State(state): Shared) -> ApiResult {
    let report = state.store().reliability()?;
    ok(serde_json::to_value(report).expect("report serializes"))
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

pub async fn asset(State(state): Shared, Path(rel): Path<String>) -> ApiResult {
    let root = state
        .config
        .assets
        .as_ref()
        .ok_or_else(|| ApiError::NotFound("asset serving is not configured".into()))?;
    let rel = PathBuf::from(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(ApiError::NotFound("no such asset".into()));
    }
    let path = root.join(&rel);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::NotFound(format!("no asset {}", rel.display())))?;
    let mut resp = bytes.into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type(&path)));
    Ok(resp)
}

pub async fn not_found() -> ApiError {
    ApiError::NotFound("no such endpoint".into())
}
