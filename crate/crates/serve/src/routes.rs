use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use neurovol::annotation::BlockKey;
use neurovol::classify::{retrain_from_annotations, DEFAULT_C};
use neurovol::store::{ChangeSet, ExportFormat, RevisionSelector};
use neurovol::{Annotation, Store};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::{ApiError, AppState};

type Params = Query<HashMap<String, String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub dataset: String,
    pub layer: String,
    pub revision: u64,
    pub annotations: Vec<Annotation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriteResponse {
    pub revision: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainResponse {
    pub model_version: u64,
    pub revision: u64,
    pub fold_auc: Vec<f64>,
    pub mean_auc: f64,
    pub seed: u64,
    pub examples: usize,
}

/// Default annotation layer used for retraining.
pub const TRAINING_LAYER: &str = "centroids";

pub fn router(state: AppState, cors_origins: &[String]) -> Result<Router, ApiError> {
    let origins = if cors_origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        let list = cors_origins
            .iter()
            .map(|o| {
                HeaderValue::from_str(o).map_err(|_| ApiError::Startup(format!("bad CORS origin {o:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(list)
    };
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::PUT, Method::POST, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE]);

    Ok(Router::new()
        .route("/datasets", get(list_datasets))
        .route("/d/{id}/info", get(info))
        .route("/d/{id}/scales/{key}/{chunk}", get(chunk))
        .route("/d/{id}/ann/{layer}", get(read_layer).put(write_layer))
        .route("/d/{id}/ann/{layer}/export", get(export))
        .route("/d/{id}/retrain", post(retrain))
        .layer(cors)
        .with_state(state))
}

/// Runs blocking store work off the async executor.
async fn blocking<T, F>(state: &AppState, id: Option<&str>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(Store) -> Result<T, ApiError> + Send + 'static,
{
    if let Some(id) = id {
        if !state.datasets.allows(id) {
            return Err(ApiError::NotFound(format!("dataset {id:?}")));
        }
    }
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || f(store))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn param<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError> {
    q.get(name)
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::BadRequest(format!("bad value {v:?} for query parameter {name}")))
        })
        .transpose()
}

fn revision_param(q: &HashMap<String, String>) -> Result<RevisionSelector, ApiError> {
    Ok(match q.get("rev").map(String::as_str) {
        None | Some("HEAD") | Some("head") => RevisionSelector::Head,
        Some(_) => RevisionSelector::At(param(q, "rev")?.expect("present")),
    })
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn list_datasets(State(state): State<AppState>) -> Result<Json<Vec<String>>, ApiError> {
    let filter = state.datasets.clone();
    let ids = blocking(&state, None, move |s| {
        Ok(s.list_datasets()?.into_iter().filter(|id| filter.allows(id)).collect())
    })
    .await?;
    Ok(Json(ids))
}

async fn info(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = blocking(&state, Some(&id), {
        let id = id.clone();
        move |s| Ok(s.manifest_bytes(&id)?)
    })
    .await?;
    Ok(json_bytes(bytes))
}

async fn chunk(
    State(state): State<AppState>,
    Path((id, key, name)): Path<(String, String, String)>,
) -> Result<Response, ApiError> {
    let bytes = blocking(&state, Some(&id), {
        let id = id.clone();
        move |s| Ok(s.read_chunk_named(&id, &key, &name)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn read_layer(
    State(state): State<AppState>,
    Path((id, layer)): Path<(String, String)>,
    Query(q): Params,
) -> Result<Json<AnnotationDocument>, ApiError> {
    let sel = revision_param(&q)?;
    let blocks = match q.get("blocks").map(String::as_str) {
        None | Some("ALL") | Some("all") => None,
        Some("") => Some(Vec::new()),
        Some(list) => Some(
            list.split(',')
                .map(|k| BlockKey::parse(k.trim()).map_err(ApiError::from))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let doc = blocking(&state, Some(&id), {
        let id = id.clone();
        move |s| {
            let (revision, annotations) = s.read_annotations(&id, &layer, blocks.as_deref(), sel)?;
            Ok(AnnotationDocument {
                dataset: id,
                layer,
                revision,
                annotations,
            })
        }
    })
    .await?;
    Ok(Json(doc))
}

async fn write_layer(
    State(state): State<AppState>,
    Path((id, layer)): Path<(String, String)>,
    Query(q): Params,
    body: Bytes,
) -> Result<Json<WriteResponse>, ApiError> {
    let base: u64 = param(&q, "base")?.ok_or_else(|| ApiError::BadRequest("missing base revision".into()))?;
    let author = q.get("author").cloned().unwrap_or_else(|| "anonymous".into());
    let changes: ChangeSet =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("change set: {e}")))?;
    let rev = blocking(&state, Some(&id), {
        let id = id.clone();
        move |s| Ok(s.write_annotations(&id, &layer, &changes, base, &author)?)
    })
    .await?;
    Ok(Json(WriteResponse {
        revision: rev.revision,
    }))
}

async fn export(
    State(state): State<AppState>,
    Path((id, layer)): Path<(String, String)>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let format: ExportFormat = param(&q, "format")?.unwrap_or(ExportFormat::Json);
    let sel = revision_param(&q)?;
    let text = blocking(&state, Some(&id), {
        let id = id.clone();
        move |s| Ok(s.export_annotations(&id, &layer, sel, format)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, format.content_type())], text).into_response())
}

async fn retrain(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Json<RetrainResponse>, ApiError> {
    let layer = q.get("layer").cloned().unwrap_or_else(|| TRAINING_LAYER.into());
    let c: f64 = param(&q, "c")?.unwrap_or(DEFAULT_C);
    let seed: u64 = param(&q, "seed")?.unwrap_or(0);
    let out = blocking(&state, Some(&id), {
        let id = id.clone();
        move |s| Ok(retrain_from_annotations(&s, &id, &layer, c, seed)?)
    })
    .await?;
    Ok(Json(RetrainResponse {
        model_version: out.version,
        revision: out.revision,
        fold_auc: out.report.fold_auc,
        mean_auc: out.report.mean_auc,
        seed: out.report.seed,
        examples: out.examples,
    }))
}
