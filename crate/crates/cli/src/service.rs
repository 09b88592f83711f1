//! HTTP API over the knowledge store.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crag_core::evaluation::{TokenizerRegistry, TokenizerSpec};
use crag_core::llm_gateway::Gateway;
use crag_core::pipeline::{KnowledgeStore, Method, Provenance};
use serde::Serialize;
use serde_json::json;

use crate::config::Prices;
use crate::qa::{answer_question, AskError, AskRequest, QaContext};
use crate::stages::load_corpus;
use crate::{AppConfig, CliError};

pub struct AppState {
    store: KnowledgeStore,
    review_counts: BTreeMap<String, usize>,
    gateways: BTreeMap<String, Arc<Gateway>>,
    default_model: String,
    tokenizers: Vec<TokenizerSpec>,
    registry: TokenizerRegistry,
    prices: Prices,
}

impl AppState {
    pub fn from_config(config: &AppConfig) -> Result<Self, CliError> {
        let review_counts = match load_corpus(config) {
            Ok(groups) => groups.iter().map(|g| (g.product_id.clone(), g.len())).collect(),
            Err(CliError::MissingPrerequisite { .. }) => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        let mut gateways = BTreeMap::new();
        for id in &config.qa_models {
            gateways.insert(id.clone(), Arc::new(config.backend(id)?.build_gateway()?));
        }
        Ok(Self {
            store: KnowledgeStore::new(&config.paths.knowledge),
            review_counts,
            gateways,
            default_model: config.qa_models.first().cloned().unwrap_or_default(),
            tokenizers: config.tokenizers.clone(),
            registry: config.tokenizer_registry()?,
            prices: config.prices.clone(),
        })
    }
}

#[derive(Debug, Serialize)]
struct ProductInfo {
    product_id: String,
    review_count: usize,
    methods_available: Vec<Method>,
}

struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<AskError> for ApiError {
    fn from(e: AskError) -> Self {
        let status = match &e {
            AskError::BadRequest(_) => StatusCode::BAD_REQUEST,
            AskError::NotFound(_) => StatusCode::NOT_FOUND,
            AskError::Upstream { .. } => StatusCode::BAD_GATEWAY,
            AskError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = match &e {
            AskError::Upstream { correlation_id, .. } => {
                json!({ "error": e.to_string(), "correlation_id": correlation_id })
            }
            _ => json!({ "error": e.to_string() }),
        };
        ApiError(status, body)
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() }))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "models": state.gateways.keys().collect::<Vec<_>>() }))
}

async fn products(State(state): State<Arc<AppState>>) -> Result<Json<Vec<ProductInfo>>, ApiError> {
    let st = state.clone();
    let listed = tokio::task::spawn_blocking(move || -> Result<Vec<ProductInfo>, ApiError> {
        let mut by_product: BTreeMap<String, Vec<Method>> = BTreeMap::new();
        for entry in st.store.entries().map_err(internal)? {
            by_product.entry(entry.product_id).or_default().push(entry.method);
        }
        let mut out = Vec::with_capacity(by_product.len());
        for (product_id, methods_available) in by_product {
            let review_count = match st.review_counts.get(&product_id) {
                Some(n) => *n,
                // without the corpus, fall back on the RAG provenance
                None => match st.store.load(&product_id, Method::Rag).map(|d| d.provenance) {
                    Ok(Provenance::Reviews(idx)) => idx.len(),
                    _ => 0,
                },
            };
            out.push(ProductInfo {
                product_id,
                review_count,
                methods_available,
            });
        }
        Ok(out)
    })
    .await
    .map_err(internal)??;
    Ok(Json(listed))
}

async fn ask(State(state): State<Arc<AppState>>, Json(req): Json<AskRequest>) -> Result<Response, ApiError> {
    let method: Method = req
        .method
        .parse()
        .map_err(|m: String| ApiError(StatusCode::BAD_REQUEST, json!({ "error": m })))?;
    let model = req.model.clone().unwrap_or_else(|| state.default_model.clone());
    let gateway = state.gateways.get(&model).cloned().ok_or_else(|| {
        ApiError(
            StatusCode::BAD_REQUEST,
            json!({ "error": format!("unknown model `{model}`") }),
        )
    })?;
    let st = state.clone();
    let resp = tokio::task::spawn_blocking(move || {
        let ctx = QaContext {
            store: &st.store,
            tokenizers: &st.tokenizers,
            registry: &st.registry,
            price_per_1k: st.prices.for_model(&model),
        };
        answer_question(&req.product_id, &req.question, method, &model, &gateway, &ctx)
    })
    .await
    .map_err(internal)??;
    Ok(Json(resp).into_response())
}

async fn log_requests(req: Request, next: Next) -> Response {
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let started = Instant::now();
    let mut resp = next.run(req).await;
    resp.headers_mut()
        .insert("cache-control", HeaderValue::from_static("no-store"));
    tracing::info!(%method, path, status = resp.status().as_u16(), elapsed_ms = started.elapsed().as_millis() as u64, "request");
    resp
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/products", get(products))
        .route("/api/ask", post(ask))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

/// Serves until ctrl-c. The caller keeps a handle on `state` so the
/// blocking HTTP clients inside it are dropped outside the runtime.
pub async fn serve(state: Arc<AppState>, bind: &str) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| CliError::Io(format!("cannot bind {bind}: {e}")))?;
    tracing::info!("listening on {bind}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
        .map_err(|e| CliError::Io(e.to_string()))
}
