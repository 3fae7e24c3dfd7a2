//! JSON API over a built working directory: concept search with per-latent
//! score breakdowns, latent and passage inspection, and the two annotation
//! tasks. Answer keys stay on the server; only grades computed here reach the
//! append-only annotation log.

mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use latentir_core::concepts::TaskKind;
use latentir_core::run::SearchStatus;
use latentir_core::Error;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

pub use store::{QueryMode, SessionStore};

pub const DEFAULT_RESULTS: usize = 10;
pub const MAX_RESULTS: usize = 1000;

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::NOT_FOUND, msg.into())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Unknown { .. } => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::Invalid(_) | Error::DimMismatch { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type Shared = Arc<SessionStore>;
type ApiResult = Result<Json<Value>, ApiError>;

/// API routes; with `ui_dir`, every other path is served from that directory.
pub fn router(store: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/search", get(search))
        .route("/api/latent/{id}", get(latent))
        .route("/api/passage/{id}", get(passage))
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/{id}/answer", post(answer))
        .route("/api/stats", get(stats))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, store: SessionStore, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("info  listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(store), ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn count_param(params: &HashMap<String, String>, name: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(name) {
        None => Ok(default),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if (1..=MAX_RESULTS).contains(&n) => Ok(n),
            _ => Err(ApiError::bad_request(format!("`{name}` must be an integer in 1..={MAX_RESULTS}, got `{v}`"))),
        },
    }
}

async fn search(State(s): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let q = params.get("q").map(|q| q.trim()).filter(|q| !q.is_empty()).ok_or_else(|| ApiError::bad_request("missing `q`"))?;
    let n = count_param(&params, "n", DEFAULT_RESULTS)?;
    let (mode, code) = s
        .resolve_query(q)?
        .ok_or_else(|| ApiError::not_found(format!("`{q}` is neither a query id nor text naming a known topic")))?;
    let res = s.index.search(&code, &s.scoring, n)?;
    let query_latents: Vec<Value> = code
        .iter()
        .map(|(j, a)| json!({ "latent_id": j, "activation": a, "description": s.description(j) }))
        .collect();
    let results: Vec<Value> = res
        .list
        .entries
        .iter()
        .enumerate()
        .map(|(rank, (doc_id, score))| {
            let pos = s.doc_position(doc_id).expect("ranked doc is in the corpus");
            let latents: Vec<Value> = s
                .index
                .contributions(&code, pos, &s.scoring)
                .into_iter()
                .map(|c| {
                    json!({
                        "latent_id": c.latent,
                        "description": s.description(c.latent),
                        "query_act": c.query_act,
                        "doc_act": c.doc_act,
                        "f_q": c.f_q,
                        "f_d": c.f_d,
                        "idf": c.idf,
                        "contribution": c.product,
                    })
                })
                .collect();
            json!({
                "rank": rank + 1,
                "doc_id": doc_id,
                "score": score,
                "text": s.corpus.get(pos as usize).text,
                "latents": latents,
            })
        })
        .collect();
    Ok(Json(json!({
        "query": q,
        "mode": mode,
        "query_text": if mode == QueryMode::QueryId { s.query_text(q) } else { None },
        "status": if res.status == SearchStatus::EmptyQuery { "empty_query" } else { "ok" },
        "query_latents": query_latents,
        "results": results,
    })))
}

async fn latent(State(s): State<Shared>, Path(id): Path<String>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let j: u32 = id.parse().map_err(|_| ApiError::bad_request(format!("latent id must be an integer, got `{id}`")))?;
    if j as usize >= s.index.m {
        return Err(ApiError::not_found(format!("latent {j} out of range (m = {})", s.index.m)));
    }
    let n = count_param(&params, "n", DEFAULT_RESULTS)?;
    let post = &s.index.postings[j as usize];
    let idf = s.index.idf[j as usize];
    let mut top: Vec<(u32, f32)> = post.docs.iter().copied().zip(post.acts.iter().copied()).collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    top.truncate(n);
    let passages: Vec<Value> = top
        .into_iter()
        .map(|(d, a)| {
            let p = s.corpus.get(d as usize);
            json!({ "doc_id": p.id, "activation": a, "weighted": f64::from(a) * idf, "text": p.text })
        })
        .collect();
    Ok(Json(json!({
        "latent_id": j,
        "df": post.len(),
        "idf": idf,
        "description": s.description(j),
        "top_passages": passages,
    })))
}

async fn passage(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let pos = s.doc_position(&id).ok_or_else(|| ApiError::not_found(format!("unknown passage `{id}`")))?;
    let mut latents: Vec<(u32, f32, f64)> =
        s.index.doc_latents(pos).into_iter().map(|(j, a)| (j, a, f64::from(a) * s.index.idf[j as usize])).collect();
    latents.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let latents: Vec<Value> = latents
        .into_iter()
        .map(|(j, a, w)| json!({ "latent_id": j, "activation": a, "weight": w, "description": s.description(j) }))
        .collect();
    Ok(Json(json!({
        "doc_id": id,
        "text": s.corpus.get(pos as usize).text,
        "mass": s.index.doc_mass[pos as usize],
        "latents": latents,
    })))
}

fn parse_kind(raw: &str) -> Result<TaskKind, ApiError> {
    serde_json::from_value(Value::String(raw.to_string()))
        .map_err(|_| ApiError::bad_request(format!("unknown task kind `{raw}`; expected embedding_id or ranking_pair")))
}

async fn next_task(State(s): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult {
    let annotator =
        params.get("annotator").map(|a| a.trim()).filter(|a| !a.is_empty()).ok_or_else(|| ApiError::bad_request("missing `annotator`"))?;
    let kind = params.get("kind").filter(|k| !k.is_empty()).map(|k| parse_kind(k)).transpose()?;
    let (task, remaining) = s.next_task(kind, annotator);
    Ok(Json(json!({ "task": task.map(|b| b.public()), "remaining": remaining })))
}

#[derive(Deserialize)]
struct AnswerBody {
    annotator: String,
    choice: String,
}

async fn answer(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: AnswerBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("body must be {{\"annotator\", \"choice\"}}: {e}")))?;
    let a = s.record_answer(&id, body.annotator.trim(), &body.choice)?;
    Ok(Json(json!({ "task_id": a.task_id, "annotator": a.annotator_id, "recorded": true })))
}

async fn stats(State(s): State<Shared>) -> ApiResult {
    let (n, groups) = s.accuracy()?;
    Ok(Json(json!({
        "documents": s.index.n_docs(),
        "queries": s.queries.len(),
        "latents": s.index.m,
        "posting_entries": s.index.posting_entries(),
        "tasks": s.task_count(),
        "annotations": n,
        "accuracy": groups,
    })))
}
