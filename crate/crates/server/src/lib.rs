//! HTTP service over a [`Store`]: a JSON API for records, queries,
//! compositions and schema evolution, plus the static UI bundle.
//!
//! Reads are open to everyone. Mutating routes need a bearer token of an
//! expert account: no token or an unknown one gives 401, a visitor
//! account's token gives 403.

pub mod auth;
pub mod error;
pub mod params;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, RawQuery, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE, LOCATION};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sia_core::evolution::{MigrationPlan, SchemaDelta};
use sia_core::html::HtmlOptions;
use sia_core::plan::{serialize_svg, LayerContent, PlanDocument};
use sia_core::scene::{serialize_x3d, CompositionRequest, CompositionWarning};
use sia_core::store::media_type_for;
use sia_core::{Period, Place, RecordDraft, RecordPatch, Role, Store};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::auth::{Auth, Session};
use crate::error::{ApiError, ApiResult};

pub const X3D_TYPE: &str = "model/x3d+xml";
pub const SVG_TYPE: &str = "image/svg+xml";
pub const WARNINGS_HEADER: &str = "x-composition-warnings";

const INDEX_HTML: &str = include_str!("../static/index.html");
const HELP_HTML: &str = include_str!("../static/help.html");

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub auth: Arc<Auth>,
    /// Directory holding a built UI bundle; the embedded page is used
    /// when absent.
    pub ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(store: Store, auth: Auth) -> Self {
        AppState {
            store: Arc::new(store),
            auth: Arc::new(auth),
            ui_dir: None,
        }
    }
}

/// An authenticated expert.
pub struct Expert(pub Session);

impl FromRequestParts<AppState> for Expert {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let header = parts.headers.get(AUTHORIZATION).and_then(|h| h.to_str().ok());
        Ok(Expert(state.auth.require_expert(header)?))
    }
}

/// `Json` whose rejections use the API error body.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::BadRequest(rejection_text(e))),
        }
    }
}

fn rejection_text(e: JsonRejection) -> String {
    e.body_text()
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> sia_core::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/auth/login", post(login))
        .route("/auth/logout", post(logout))
        .route("/facets", get(facets))
        .route("/records", get(search).post(ingest))
        .route("/records/{id}", get(read).patch(update))
        .route("/records/{id}/archive", post(archive))
        .route("/records/{id}/xml", get(export_xml))
        .route("/records/{id}/view", get(html_view))
        .route("/records/{id}/related", get(related))
        .route("/media/{id}", get(media))
        .route("/browse/history/{period}", get(browse_history))
        .route("/browse/places/{place}", get(browse_place))
        .route("/periods", get(periods).post(put_period))
        .route("/places", get(places).post(put_place))
        .route("/vocabularies/{facet}/terms", post(add_term))
        .route("/schema", get(schema).post(propose))
        .route("/schema/migrations", post(apply_migration))
        .route("/index/rebuild", post(rebuild))
        .route("/compose/model", post(compose_model))
        .route("/compose/plan", post(compose_plan))
        .route("/compose/montage", post(compose_montage));

    let app = match &state.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api
            .route("/", get(|| async { Html(INDEX_HTML) }))
            .route("/help", get(|| async { Html(HELP_HTML) })),
    };
    app.layer(TraceLayer::new_for_http()).with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, listen: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Deserialize)]
struct Credentials {
    account: String,
    password: String,
}

async fn login(State(s): State<AppState>, Body(c): Body<Credentials>) -> ApiResult<Json<Session>> {
    Ok(Json(s.auth.login(&c.account, &c.password)?))
}

async fn logout(State(s): State<AppState>, headers: HeaderMap) -> ApiResult<StatusCode> {
    let header = headers.get(AUTHORIZATION).and_then(|h| h.to_str().ok());
    let token = header
        .and_then(|h| h.strip_prefix("Bearer "))
        .ok_or(auth::AuthError::MissingToken)?;
    s.auth.session(token)?;
    s.auth.logout(token);
    Ok(StatusCode::NO_CONTENT)
}

async fn facets(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.store.list_facets())
}

async fn search(State(s): State<AppState>, RawQuery(q): RawQuery) -> ApiResult<Response> {
    let (spec, page) = params::parse_search(q.as_deref().unwrap_or(""))?;
    let store = s.store.clone();
    let result = blocking(move || store.search(&spec, page)).await?;
    Ok(Json(result).into_response())
}

async fn ingest(
    State(s): State<AppState>,
    Expert(_): Expert,
    Body(draft): Body<RecordDraft>,
) -> ApiResult<Response> {
    let store = s.store.clone();
    let r = blocking(move || store.ingest(draft, Role::Expert)).await?;
    let location = HeaderValue::from_str(&format!("/records/{}", r.id)).ok();
    let mut resp = (StatusCode::CREATED, Json(r.as_ref())).into_response();
    if let Some(l) = location {
        resp.headers_mut().insert(LOCATION, l);
    }
    Ok(resp)
}

async fn read(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let r = s.store.read(&id)?;
    Ok(Json(r.as_ref()).into_response())
}

async fn update(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Expert(_): Expert,
    Body(patch): Body<RecordPatch>,
) -> ApiResult<Response> {
    let store = s.store.clone();
    let r = blocking(move || store.update(&id, patch, Role::Expert)).await?;
    Ok(Json(r.as_ref()).into_response())
}

async fn archive(State(s): State<AppState>, Path(id): Path<String>, Expert(_): Expert) -> ApiResult<Response> {
    let store = s.store.clone();
    let r = blocking(move || store.archive(&id, Role::Expert)).await?;
    Ok(Json(r.as_ref()).into_response())
}

fn typed(content_type: &'static str, body: impl IntoResponse) -> Response {
    ([(CONTENT_TYPE, content_type)], body).into_response()
}

async fn export_xml(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(typed("application/xml; charset=utf-8", s.store.export_xml(&id)?))
}

async fn html_view(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let r = s.store.read(&id)?;
    let local = s.store.layout().media_path(&r.content.href).is_some();
    let opts = HtmlOptions {
        asset_url: local.then(|| format!("/media/{id}")),
        stylesheet: None,
    };
    let html = s.store.render_html_view(&id, &opts)?;
    Ok(typed("text/html; charset=utf-8", html))
}

#[derive(Deserialize)]
struct Limit {
    limit: Option<usize>,
}

async fn related(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(l): Query<Limit>,
) -> ApiResult<Response> {
    let limit = l.limit.unwrap_or(sia_core::query::DEFAULT_LIMIT);
    Ok(Json(s.store.related_documents(&id, limit)?).into_response())
}

async fn media(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let r = s.store.read(&id)?;
    let path = s
        .store
        .layout()
        .media_path(&r.content.href)
        .ok_or_else(|| sia_core::SiaError::NotFound(format!("no stored asset for '{id}'")))?;
    let bytes = match tokio::fs::read(&path).await {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(sia_core::SiaError::NotFound(format!("asset of '{id}' is missing")).into())
        }
        Err(e) => return Err(sia_core::SiaError::Io(e).into()),
    };
    Ok(typed(media_type_for(&path), bytes))
}

async fn browse_history(
    State(s): State<AppState>,
    Path(period): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult<Response> {
    let (_, page) = params::parse_search(q.as_deref().unwrap_or(""))?;
    Ok(Json(s.store.browse_by_history(&period, page)?).into_response())
}

async fn browse_place(
    State(s): State<AppState>,
    Path(place): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult<Response> {
    let (_, page) = params::parse_search(q.as_deref().unwrap_or(""))?;
    Ok(Json(s.store.browse_by_place(&place, page)?).into_response())
}

async fn periods(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.store.snapshot().reference.periods.clone())
}

async fn places(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.store.snapshot().reference.places.clone())
}

async fn put_period(State(s): State<AppState>, Expert(_): Expert, Body(p): Body<Period>) -> ApiResult<StatusCode> {
    let store = s.store.clone();
    blocking(move || store.put_period(p, Role::Expert)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn put_place(State(s): State<AppState>, Expert(_): Expert, Body(p): Body<Place>) -> ApiResult<StatusCode> {
    let store = s.store.clone();
    blocking(move || store.put_place(p, Role::Expert)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct Term {
    term: String,
}

async fn add_term(
    State(s): State<AppState>,
    Path(facet): Path<String>,
    Expert(_): Expert,
    Body(t): Body<Term>,
) -> ApiResult<StatusCode> {
    let store = s.store.clone();
    blocking(move || store.add_vocabulary_term(&facet, &t.term, Role::Expert)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn schema(State(s): State<AppState>, Expert(_): Expert) -> impl IntoResponse {
    let snap = s.store.snapshot();
    Json(json!({
        "version": snap.schema.version,
        "versions": snap.schema_versions,
        "schema": snap.schema.as_ref(),
    }))
}

#[derive(Deserialize)]
struct Proposal {
    delta: SchemaDelta,
}

async fn propose(
    State(s): State<AppState>,
    Expert(_): Expert,
    Body(p): Body<Proposal>,
) -> ApiResult<Json<MigrationPlan>> {
    Ok(Json(s.store.propose_schema(&p.delta)?))
}

async fn apply_migration(
    State(s): State<AppState>,
    Expert(_): Expert,
    Body(plan): Body<MigrationPlan>,
) -> ApiResult<Response> {
    let store = s.store.clone();
    let schema = blocking(move || store.apply_migration(&plan, Role::Expert)).await?;
    Ok(Json(schema.as_ref()).into_response())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Rebuilt {
    records: usize,
}

async fn rebuild(State(s): State<AppState>, Expert(_): Expert) -> ApiResult<Json<Rebuilt>> {
    let store = s.store.clone();
    let index = blocking(move || store.rebuild_index()).await?;
    Ok(Json(Rebuilt { records: index.len() }))
}

fn with_warnings(content_type: &'static str, body: String, warnings: &[CompositionWarning]) -> Response {
    let mut resp = typed(content_type, body);
    if let Ok(v) = HeaderValue::from_bytes(serde_json::to_string(warnings).unwrap_or_default().as_bytes()) {
        resp.headers_mut().insert(WARNINGS_HEADER, v);
    }
    resp
}

async fn compose_model(State(s): State<AppState>, Body(req): Body<CompositionRequest>) -> ApiResult<Response> {
    let store = s.store.clone();
    let scene = blocking(move || store.compose_model(&req)).await?;
    Ok(with_warnings(X3D_TYPE, serialize_x3d(&scene), &scene.warnings))
}

async fn compose_plan(State(s): State<AppState>, Body(req): Body<CompositionRequest>) -> ApiResult<Response> {
    let store = s.store.clone();
    let (doc, svg) = blocking(move || {
        let doc = store.compose_plan(&req)?;
        let svg = serialize_svg(&doc)?;
        Ok((doc, svg))
    })
    .await?;
    Ok(with_warnings(SVG_TYPE, svg, &doc.warnings))
}

#[derive(Deserialize)]
pub struct Overlay {
    pub id: String,
    pub opacity: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MontageRequest {
    pub base_id: String,
    #[serde(default)]
    pub overlays: Vec<Overlay>,
}

/// Points raster layers at the service's media route.
fn serve_media_from_api(doc: &mut PlanDocument, store: &Store) {
    for layer in &mut doc.layers {
        if let LayerContent::RasterEmbed { href } = &mut layer.content {
            if store.layout().media_path(href).is_some() {
                *href = format!("/media/{}", layer.source_record_id);
            }
        }
    }
}

async fn compose_montage(State(s): State<AppState>, Body(req): Body<MontageRequest>) -> ApiResult<Response> {
    let store = s.store.clone();
    let svg = blocking(move || {
        let overlays: Vec<(String, f64)> = req.overlays.into_iter().map(|o| (o.id, o.opacity)).collect();
        let mut doc = store.compose_photomontage(&req.base_id, &overlays)?;
        serve_media_from_api(&mut doc, &store);
        serialize_svg(&doc)
    })
    .await?;
    Ok(typed(SVG_TYPE, svg))
}

