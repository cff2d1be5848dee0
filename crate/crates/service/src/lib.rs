//! JSON-over-HTTP facade for drafting sessions.
//!
//! Sessions live in memory and are written to the repository only through
//! `POST /sessions/{id}/save`. Edits to one session are serialized; reads
//! and previews share the session lock. Every response body carries
//! `revision`: the session revision for session-scoped routes, `null`
//! elsewhere. Mutating routes honour an `If-Revision` header and answer 409
//! when it is stale.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value as Json_};
use tokio::sync::RwLock;

use contract_cad::assembler::{AssemblyError, EditOutcome, RenderOptions, Session};
use contract_cad::cases::{
    check_completeness, check_consistency, CaseError, CaseRule, Factor, RuleSet,
};
use contract_cad::model::ModelError;
use contract_cad::store::{manifest_bytes, snapshot_hash, Repository, StoreError};
use contract_cad::{Delta, FinalizedInstance, Mode};

pub const IF_REVISION: &str = "if-revision";

struct Entry {
    session: Session,
    finalized: Option<FinalizedInstance>,
}

pub struct AppState {
    repo: Repository,
    sessions: RwLock<HashMap<String, Arc<RwLock<Entry>>>>,
    next_id: AtomicU64,
}

type Shared = Arc<AppState>;

pub fn router(repo: Repository) -> Router {
    let state = Arc::new(AppState {
        repo,
        sessions: RwLock::new(HashMap::new()),
        next_id: AtomicU64::new(1),
    });
    Router::new()
        .route("/generics", get(list_generics))
        .route("/generics/{id}", get(get_generic))
        .route("/generics/{id}/versions", post(promote))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/edits", post(edit))
        .route("/sessions/{id}/preview", post(preview))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/save", post(save))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/render", get(render))
        .route("/sessions/{id}/report", get(report))
        .route("/case-checks", post(case_checks))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    revision: Option<u64>,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, revision: Option<u64>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            revision,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"revision": self.revision, "error": self.message})),
        )
            .into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn reply(status: StatusCode, revision: Option<u64>, body: Json_) -> Response {
    let mut map = match body {
        Json_::Object(m) => m,
        other => Map::from_iter([("body".to_string(), other)]),
    };
    map.insert("revision".into(), json!(revision));
    (status, Json(Json_::Object(map))).into_response()
}

fn parse<T: DeserializeOwned>(body: &Bytes, revision: Option<u64>) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, revision, e.to_string()))
}

fn store_error(e: StoreError) -> ApiError {
    let status = match e {
        StoreError::GenericNotFound(_) | StoreError::InstanceNotFound(_) => StatusCode::NOT_FOUND,
        StoreError::Locked(_) => StatusCode::SERVICE_UNAVAILABLE,
        StoreError::Refused(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    ApiError::new(status, None, e.to_string())
}

fn assembly_error(e: AssemblyError, revision: u64) -> ApiError {
    let status = match &e {
        AssemblyError::Model(
            ModelError::UnknownUnit(_)
            | ModelError::UnknownVersion(_)
            | ModelError::UnknownParameter(_),
        ) => StatusCode::NOT_FOUND,
        AssemblyError::NothingToUndo => StatusCode::CONFLICT,
        _ => StatusCode::BAD_REQUEST,
    };
    ApiError::new(status, Some(revision), e.to_string())
}

fn check_revision(headers: &HeaderMap, current: u64) -> Result<(), ApiError> {
    let Some(value) = headers.get(IF_REVISION) else {
        return Ok(());
    };
    let expected: u64 = value
        .to_str()
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                Some(current),
                "If-Revision must be an integer",
            )
        })?;
    if expected != current {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            Some(current),
            format!("stale revision {expected}; the session is at {current}"),
        ));
    }
    Ok(())
}

async fn lookup(state: &AppState, id: &str) -> Result<Arc<RwLock<Entry>>, ApiError> {
    state.sessions.read().await.get(id).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            None,
            format!("unknown session `{id}`"),
        )
    })
}

fn refuse_if_finalized(entry: &Entry) -> Result<(), ApiError> {
    match entry.finalized {
        Some(_) => Err(ApiError::new(
            StatusCode::CONFLICT,
            Some(entry.session.revision()),
            format!("instance `{}` is finalized", entry.session.instance().id),
        )),
        None => Ok(()),
    }
}

/// The stored generic must still be the snapshot the session works on.
fn check_snapshot(repo: &Repository, entry: &Entry) -> Result<(), ApiError> {
    let doc = entry.session.doc();
    let stored = repo.stored_snapshot_hash(&doc.id).map_err(store_error)?;
    if stored != snapshot_hash(doc) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            Some(entry.session.revision()),
            format!(
                "generic document `{}` changed in the repository since this session opened",
                doc.id
            ),
        ));
    }
    Ok(())
}

fn view(id: &str, entry: &Entry) -> Json_ {
    let s = &entry.session;
    json!({
        "sessionId": id,
        "genericId": s.doc().id,
        "instanceId": s.instance().id,
        "mode": s.mode(),
        "finalized": entry.finalized.is_some(),
        "instance": s.instance(),
        "report": s.report(),
    })
}

async fn list_generics(State(state): State<Shared>) -> ApiResult {
    let mut generics = Vec::new();
    for id in state.repo.list_generics().map_err(store_error)? {
        let doc = state.repo.load_generic(&id).map_err(store_error)?;
        generics.push(json!({"id": doc.id, "title": doc.title}));
    }
    Ok(reply(StatusCode::OK, None, json!({"generics": generics})))
}

async fn get_generic(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let doc = state.repo.load_generic(&id).map_err(store_error)?;
    let manifest: Json_ = serde_json::from_str(&manifest_bytes(&doc)).expect("manifest is JSON");
    let fragments: BTreeMap<&str, &str> = doc
        .all_versions()
        .map(|v| (v.id.as_str(), v.template.as_str()))
        .collect();
    Ok(reply(
        StatusCode::OK,
        None,
        json!({"generic": manifest, "fragments": fragments, "snapshotSha256": snapshot_hash(&doc)}),
    ))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateSession {
    generic_id: Option<String>,
    instance_id: Option<String>,
    mode: Option<Mode>,
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> ApiResult {
    let req: CreateSession = parse(&body, None)?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let entry = match (req.generic_id, req.instance_id) {
        (Some(generic), instance) => {
            let instance = instance.unwrap_or_else(|| id.clone());
            if state
                .repo
                .list_instances()
                .map_err(store_error)?
                .contains(&instance)
            {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    None,
                    format!("instance `{instance}` already exists"),
                ));
            }
            let doc = state.repo.load_generic(&generic).map_err(store_error)?;
            let session = Session::new(doc, &instance, req.mode.unwrap_or_default())
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, None, e.to_string()))?;
            Entry {
                session,
                finalized: None,
            }
        }
        (None, Some(instance)) => {
            let loaded = state.repo.load_instance(&instance).map_err(store_error)?;
            let doc = state
                .repo
                .load_generic(&loaded.instance.generic_id)
                .map_err(store_error)?;
            let mut session = Session::resume(doc, loaded.instance)
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, None, e.to_string()))?;
            if let Some(mode) = req.mode {
                session.set_mode(mode);
            }
            Entry {
                session,
                finalized: loaded.finalized,
            }
        }
        (None, None) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                None,
                "give genericId or instanceId",
            ));
        }
    };
    let body = view(&id, &entry);
    let revision = entry.session.revision();
    state
        .sessions
        .write()
        .await
        .insert(id, Arc::new(RwLock::new(entry)));
    Ok(reply(StatusCode::CREATED, Some(revision), body))
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let entry = entry.read().await;
    Ok(reply(
        StatusCode::OK,
        Some(entry.session.revision()),
        view(&id, &entry),
    ))
}

/// Body of `POST /sessions/{id}/edits`: a delta, or `{"mode": ..}` to switch mode.
#[derive(Deserialize)]
#[serde(untagged)]
enum EditBody {
    Delta(Delta),
    Mode { mode: Mode },
}

/// Blocked outcomes carry no report of their own; the unchanged one is attached.
fn outcome_response(outcome: EditOutcome, session: &Session) -> Response {
    let status = if outcome.is_blocked() {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::OK
    };
    let mut body = serde_json::to_value(outcome).expect("outcome serializes");
    if body.get("report").is_none() {
        body["report"] = json!(session.report());
    }
    reply(status, Some(session.revision()), body)
}

async fn edit(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let mut entry = entry.write().await;
    let current = entry.session.revision();
    check_revision(&headers, current)?;
    refuse_if_finalized(&entry)?;
    match parse::<EditBody>(&body, Some(current))? {
        EditBody::Mode { mode } => {
            entry.session.set_mode(mode);
            let s = &entry.session;
            Ok(reply(
                StatusCode::OK,
                Some(s.revision()),
                json!({"mode": s.mode(), "report": s.report()}),
            ))
        }
        EditBody::Delta(delta) => {
            let outcome = entry
                .session
                .apply_edit(&delta)
                .map_err(|e| assembly_error(e, current))?;
            Ok(outcome_response(outcome, &entry.session))
        }
    }
}

async fn preview(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let entry = entry.read().await;
    let current = entry.session.revision();
    let delta: Delta = parse(&body, Some(current))?;
    let outcome = entry
        .session
        .preview_edit(&delta)
        .map_err(|e| assembly_error(e, current))?;
    let blocked = outcome.is_blocked();
    let mut body = serde_json::to_value(outcome).expect("outcome serializes");
    body["blocked"] = json!(blocked);
    Ok(reply(StatusCode::OK, Some(current), body))
}

async fn finalize(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let mut entry = entry.write().await;
    let current = entry.session.revision();
    check_revision(&headers, current)?;
    refuse_if_finalized(&entry)?;
    match entry.session.finalize() {
        Ok(fin) => {
            let hash = fin.generic_sha256().to_string();
            entry.finalized = Some(fin);
            Ok(reply(
                StatusCode::OK,
                Some(current),
                json!({"finalized": true, "genericSha256": hash, "report": entry.session.report()}),
            ))
        }
        Err(report) => Ok(reply(
            StatusCode::UNPROCESSABLE_ENTITY,
            Some(current),
            json!({"finalized": false, "blockers": report.lines(), "report": report}),
        )),
    }
}

async fn save(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let entry = entry.read().await;
    let current = entry.session.revision();
    check_revision(&headers, current)?;
    let lock = state.repo.lock().map_err(store_error)?;
    check_snapshot(&state.repo, &entry)?;
    match &entry.finalized {
        Some(fin) => lock.save_finalized(fin),
        None => lock.save_instance(entry.session.instance()),
    }
    .map_err(store_error)?;
    Ok(reply(
        StatusCode::OK,
        Some(current),
        json!({
            "saved": entry.session.instance().id,
            "finalized": entry.finalized.is_some(),
            "report": entry.session.report(),
        }),
    ))
}

async fn undo(
    State(state): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let mut entry = entry.write().await;
    let current = entry.session.revision();
    check_revision(&headers, current)?;
    refuse_if_finalized(&entry)?;
    entry
        .session
        .undo()
        .map_err(|e| assembly_error(e, current))?;
    let s = &entry.session;
    Ok(reply(
        StatusCode::OK,
        Some(s.revision()),
        json!({"instance": s.instance(), "report": s.report()}),
    ))
}

async fn render(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let entry = entry.read().await;
    let current = entry.session.revision();
    let opts = RenderOptions::default();
    let rendered = match &entry.finalized {
        Some(fin) => fin.render(entry.session.doc(), &opts),
        None => entry.session.render(&opts),
    }
    .map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            Some(current),
            e.to_string(),
        )
    })?;
    Ok(reply(
        StatusCode::OK,
        Some(current),
        json!({
            "draft": entry.finalized.is_none(),
            "text": rendered.text,
            "bodyStart": rendered.body_start,
            "spans": rendered.spans,
        }),
    ))
}

async fn report(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let entry = lookup(&state, &id).await?;
    let entry = entry.read().await;
    let s = &entry.session;
    let report = s.report();
    let explanations: Vec<String> = (0..report.violations.len())
        .map(|i| {
            s.checker()
                .explain(Some(s.instance()), report, i)
                .expect("index in range")
        })
        .collect();
    Ok(reply(
        StatusCode::OK,
        Some(s.revision()),
        json!({"report": report, "lines": report.lines(), "explanations": explanations}),
    ))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Promote {
    session_id: String,
    unit: String,
    template: String,
    rationale: String,
    created_at: Option<String>,
}

async fn promote(
    State(state): State<Shared>,
    Path(generic): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let req: Promote = parse(&body, None)?;
    let entry = lookup(&state, &req.session_id).await?;
    let mut entry = entry.write().await;
    let current = entry.session.revision();
    if entry.session.doc().id != generic {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            Some(current),
            format!(
                "session `{}` does not draft from `{generic}`",
                req.session_id
            ),
        ));
    }
    check_revision(&headers, current)?;
    refuse_if_finalized(&entry)?;
    let lock = state.repo.lock().map_err(store_error)?;
    check_snapshot(&state.repo, &entry)?;
    let created_at = req
        .created_at
        .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let (version, outcome) = entry
        .session
        .promote_version(
            &req.unit.as_str().into(),
            &req.template,
            &req.rationale,
            &created_at,
        )
        .map_err(|e| assembly_error(e, current))?;
    lock.save_generic(entry.session.doc())
        .map_err(store_error)?;
    let blocked = outcome.is_blocked();
    let mut body = serde_json::to_value(outcome).expect("outcome serializes");
    body["version"] = json!(version);
    body["blocked"] = json!(blocked);
    if blocked {
        body["report"] = json!(entry.session.report());
    }
    Ok(reply(
        StatusCode::CREATED,
        Some(entry.session.revision()),
        body,
    ))
}

/// Either rule-set text or factors and rules as JSON.
#[derive(Deserialize)]
#[serde(untagged)]
enum CaseBody {
    Text {
        text: String,
    },
    Structured {
        factors: Vec<Factor>,
        rules: Vec<CaseRule>,
    },
}

async fn case_checks(body: Bytes) -> ApiResult {
    let (factors, rules) = match parse::<CaseBody>(&body, None)? {
        CaseBody::Text { text } => {
            let set = RuleSet::parse(&text).map_err(case_error)?;
            (set.factors, set.rules)
        }
        CaseBody::Structured { factors, rules } => (factors, rules),
    };
    let (completeness, consistency) = tokio::task::spawn_blocking(move || {
        Ok::<_, CaseError>((
            check_completeness(&factors, &rules)?,
            check_consistency(&factors, &rules)?,
        ))
    })
    .await
    .expect("case check task")
    .map_err(case_error)?;
    Ok(reply(
        StatusCode::OK,
        None,
        json!({"completeness": completeness, "consistency": consistency}),
    ))
}

fn case_error(e: CaseError) -> ApiError {
    let status = match e {
        CaseError::TooLarge { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::BAD_REQUEST,
    };
    ApiError::new(status, None, e.to_string())
}
