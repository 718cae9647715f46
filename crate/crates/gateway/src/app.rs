//! Application state, wiring from configuration, and the HTTP router.

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use carebridge_core::agents::{
    authorized_for, AgentRuntime, CompletionAdapter, EmergencyLexicon, FallbackPolicy,
    PrescriptionDenyList, StubAdapter, StubRules, TemplateSet, TimeoutAdapter, DATE_WINDOW_DAYS,
};
use carebridge_core::clock::Clock;
use carebridge_core::domain::{
    AppointmentAction, AppointmentIntent, ConsentScope, Language, PatientRecord, Role,
};
use carebridge_core::fixtures::FixtureSource;
use carebridge_core::orchestrator::{LanguageDetector, Orchestrator, ToolRegistry};
use carebridge_core::privacy::{
    AccessMatrix, Action, AuditLog, Compliance, Decision, KeyRing, Outcome, ResourceClass,
    SecretKey, VerifyOutcome,
};
use carebridge_core::session::{Actor, SessionContext};
use carebridge_core::store::{AppointmentOutcome, FileStore, PhiManifest, RecordStore};
use chrono::{Duration, NaiveDate};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::accounts::CredentialStore;
use crate::auth::TokenSigner;
use crate::config::{AdapterKind, Config};
use crate::error::ApiError;
use crate::external::ExternalAdapter;

/// Request bodies and chat messages are capped at this many bytes.
pub const MAX_BODY_BYTES: usize = 8 * 1024;

#[derive(Debug, Clone)]
pub struct AppState {
    pub orchestrator: Orchestrator,
    pub store: Arc<RecordStore>,
    pub compliance: Arc<Compliance>,
    pub signer: Arc<TokenSigner>,
    pub accounts: Arc<CredentialStore>,
}

impl AppState {
    fn clock(&self) -> &Arc<dyn Clock> {
        self.compliance.clock()
    }

    fn today(&self) -> NaiveDate {
        self.clock().now().date_naive()
    }

    /// Session for the request: anonymous without a bearer token, 401 for a
    /// token that fails verification.
    pub fn session(&self, headers: &HeaderMap) -> Result<SessionContext, ApiError> {
        let Some(value) = headers.get(header::AUTHORIZATION) else {
            return Ok(self.compliance.session(Actor::Anonymous, Language::En));
        };
        let token = value
            .to_str()
            .ok()
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError::BadToken)?;
        let claims = self
            .signer
            .verify(token.trim(), self.clock().now())
            .map_err(|_| ApiError::BadToken)?;
        Ok(self.compliance.session(
            Actor::authenticated(claims.actor_id, claims.role),
            Language::En,
        ))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("fixtures: {0}")]
    Fixtures(String),
    #[error("master key: {0}")]
    MasterKey(String),
    #[error("audit log: {0}")]
    Audit(#[from] carebridge_core::privacy::AuditError),
    #[error("record store: {0}")]
    Store(#[from] carebridge_core::store::BackendError),
    #[error("cannot create data directory: {0}")]
    DataDir(std::io::Error),
}

fn fixtures(e: impl std::fmt::Display) -> StartupError {
    StartupError::Fixtures(e.to_string())
}

/// Builds the full state from configuration: fixture-backed agents, the
/// selected adapter, the file audit log and the file record store.
pub fn build_state(
    config: &Config,
    master_key_hex: &str,
    clock: Arc<dyn Clock>,
) -> Result<AppState, StartupError> {
    let source = match &config.fixtures_dir {
        Some(dir) => FixtureSource::dir(dir),
        None => FixtureSource::Embedded,
    };
    let adapter: Arc<dyn CompletionAdapter> = match config.adapter {
        AdapterKind::Stub => Arc::new(StubAdapter::new(
            StubRules::load(&source).map_err(fixtures)?,
        )),
        AdapterKind::External => {
            let url = config.external_url.clone().unwrap_or_default();
            Arc::new(TimeoutAdapter::new(
                Arc::new(ExternalAdapter::new(url, config.adapter_timeout())),
                config.adapter_timeout(),
            ))
        }
    };
    let runtime = AgentRuntime {
        templates: Arc::new(TemplateSet::load(&source).map_err(fixtures)?),
        adapter,
        lexicon: Arc::new(EmergencyLexicon::load(&source).map_err(fixtures)?),
        denylist: Arc::new(PrescriptionDenyList::load(&source).map_err(fixtures)?),
        clock: clock.clone(),
        policy: if config.fallback {
            FallbackPolicy::Fallback
        } else {
            FallbackPolicy::Strict
        },
    };
    let detector = LanguageDetector::load(&source).map_err(fixtures)?;
    let accounts = CredentialStore::load(&source).map_err(fixtures)?;

    let master =
        SecretKey::from_hex(master_key_hex).map_err(|e| StartupError::MasterKey(e.to_string()))?;
    let signer =
        TokenSigner::from_master_key(master.expose(), Duration::seconds(config.token_ttl_secs));
    let keyring = KeyRing::new(master);

    for path in [&config.audit_path, &config.store_path] {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(StartupError::DataDir)?;
        }
    }
    let audit = Arc::new(AuditLog::open_file(&config.audit_path, clock.clone())?);
    let compliance = Arc::new(Compliance::new(AccessMatrix::standard(), audit, clock));
    let backend = Arc::new(FileStore::open(&config.store_path)?);
    let store = RecordStore::new(
        backend,
        Arc::new(keyring),
        PhiManifest::standard(),
        compliance.clone(),
    );
    Ok(AppState {
        orchestrator: Orchestrator::new(
            ToolRegistry::with_agents(runtime),
            detector,
            compliance.clone(),
        ),
        store: Arc::new(store),
        compliance,
        signer: Arc::new(signer),
        accounts: Arc::new(accounts),
    })
}

/// Writes the audit chain head next to the log as `<log>.head`.
pub fn write_head_file(audit: &AuditLog, path: &Path) -> std::io::Result<()> {
    let head = serde_json::to_vec(&audit.head()).expect("head serializes");
    std::fs::write(path, head)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/auth/login", post(login))
        .route("/api/v1/chat", post(chat))
        .route(
            "/api/v1/appointments",
            post(create_appointment).get(list_appointments),
        )
        .route("/api/v1/consent", post(grant_consent).get(list_consent))
        .route("/api/v1/consent/{grant_id}", delete(revoke_consent))
        .route("/api/v1/audit/verify", get(verify_audit))
        .route("/api/v1/patients/{id}", get(get_patient).put(put_patient))
        .route("/api/v1/patients/{id}/history", post(append_history))
        .fallback(|| async { ApiError::NotFound })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

/// One log line per request. Bodies are never logged.
async fn log_request(request: Request, next: Next) -> Response {
    let method = request.method().clone();
    let route = request
        .uri()
        .path()
        .split('/')
        .take(4)
        .collect::<Vec<_>>()
        .join("/");
    let response = next.run(request).await;
    tracing::info!(%method, route, status = response.status().as_u16(), "request");
    response
}

/// JSON body extractor with the gateway's error shape: 413 over the cap,
/// 400 for non-UTF-8, malformed JSON or unexpected keys.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| match e {
            BytesRejection::FailedToBufferBody(inner)
                if inner.status() == StatusCode::PAYLOAD_TOO_LARGE =>
            {
                ApiError::TooLarge
            }
            _ => ApiError::Malformed,
        })?;
        let text = std::str::from_utf8(&bytes).map_err(|_| ApiError::Malformed)?;
        serde_json::from_str(text)
            .map(Body)
            .map_err(|_| ApiError::Malformed)
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| ApiError::Internal)?
}

fn parse_language(code: Option<&str>) -> Result<Option<Language>, ApiError> {
    code.map(|c| c.parse().map_err(|_| ApiError::UnsupportedLanguage))
        .transpose()
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginRequest {
    actor_id: String,
    role: Role,
    credential: String,
}

async fn login(
    State(state): State<AppState>,
    Body(req): Body<LoginRequest>,
) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        let ok = state
            .accounts
            .verify(&req.actor_id, req.role, &req.credential);
        let actor = if ok {
            Actor::authenticated(req.actor_id.clone(), req.role)
        } else {
            Actor::Anonymous
        };
        let session = state.compliance.session(actor, Language::En);
        let outcome = if ok { Outcome::Allow } else { Outcome::Deny };
        state
            .compliance
            .record(&session, "auth.login", "session", &req.actor_id, outcome)
            .map_err(|_| ApiError::AuditUnavailable)?;
        if !ok {
            return Err(ApiError::BadCredentials);
        }
        let (token, claims) = state
            .signer
            .issue(&req.actor_id, req.role, state.clock().now());
        Ok(Json(
            json!({"token": token, "role": claims.role, "expires_at": claims.exp}),
        ))
    })
    .await
}

fn default_agent() -> String {
    "auto".to_owned()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    message: String,
    #[serde(default = "default_agent")]
    agent: String,
    #[serde(default)]
    language: Option<String>,
}

async fn chat(
    State(state): State<AppState>,
    headers: HeaderMap,
    Body(req): Body<ChatRequest>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&headers)?;
    let language = parse_language(req.language.as_deref())?;
    if req.message.len() > MAX_BODY_BYTES {
        return Err(ApiError::TooLarge);
    }
    blocking(move || {
        let outcome = state
            .orchestrator
            .call_tool(&req.agent, &req.message, language, &session)?;
        let Value::Object(mut body) = outcome.output else {
            return Err(ApiError::Internal);
        };
        body.insert("agent_used".into(), json!(outcome.tool));
        body.insert("language_used".into(), json!(outcome.language));
        Ok(Json(Value::Object(body)))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StructuredIntent {
    action: AppointmentAction,
    #[serde(default)]
    date: Option<NaiveDate>,
    #[serde(default)]
    reason: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppointmentRequest {
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    intent: Option<StructuredIntent>,
    #[serde(default)]
    patient_id: Option<String>,
    #[serde(default)]
    appointment_id: Option<String>,
    #[serde(default)]
    language: Option<String>,
}

/// Records a denial for a request that needs a session it does not have.
fn require_session(
    state: &AppState,
    session: &SessionContext,
    action: &str,
    class: &str,
) -> Result<(), ApiError> {
    if session.role().is_some() {
        return Ok(());
    }
    state
        .compliance
        .record(session, action, class, "-", Outcome::Deny)
        .map_err(|_| ApiError::AuditUnavailable)?;
    Err(ApiError::Unauthenticated)
}

async fn create_appointment(
    State(state): State<AppState>,
    headers: HeaderMap,
    Body(req): Body<AppointmentRequest>,
) -> Result<Response, ApiError> {
    let session = state.session(&headers)?;
    let language = parse_language(req.language.as_deref())?;
    blocking(move || {
        require_session(
            &state,
            &session,
            "appointment.request",
            ResourceClass::Appointment.as_str(),
        )?;
        let intent = match (req.message, req.intent) {
            (Some(message), None) => {
                let outcome =
                    state
                        .orchestrator
                        .call_tool("appointment", &message, language, &session)?;
                let intent: AppointmentIntent =
                    serde_json::from_value(outcome.output).map_err(|_| ApiError::Internal)?;
                if intent.is_invalid_shape() {
                    return Err(ApiError::Unprocessable);
                }
                intent
            }
            (None, Some(s)) => {
                let today = state.today();
                let window = today..=today + Duration::days(DATE_WINDOW_DAYS);
                AppointmentIntent {
                    action: s.action,
                    date: s.date.filter(|d| window.contains(d)),
                    reason: s.reason,
                    authorized: authorized_for(session.role()),
                }
            }
            _ => return Err(ApiError::Malformed),
        };
        let patient_id = req
            .patient_id
            .unwrap_or_else(|| session.actor_id().unwrap_or_default().to_owned());
        let outcome = state.store.upsert_appointment(
            &patient_id,
            &intent,
            &session,
            req.appointment_id.as_deref(),
        )?;
        let status = match outcome {
            AppointmentOutcome::Created { .. } => StatusCode::CREATED,
            _ => StatusCode::OK,
        };
        let mut body = serde_json::to_value(&outcome).expect("outcome serializes");
        body["patient_id"] = json!(patient_id);
        Ok((status, Json(body)).into_response())
    })
    .await
}

async fn list_appointments(
    State(state): State<AppState>,
    headers: HeaderMap,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&headers)?;
    blocking(move || {
        let list = state.store.list_appointments(&session)?;
        let items: Vec<Value> = list
            .into_iter()
            .map(|(patient_id, appointment)| {
                let mut v = serde_json::to_value(appointment).expect("appointment serializes");
                v["patient_id"] = json!(patient_id);
                v
            })
            .collect();
        Ok(Json(json!({"appointments": items})))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsentRequest {
    grantee_id: String,
    scope: ConsentScope,
}

fn consent_error(session: &SessionContext, e: carebridge_core::privacy::ConsentError) -> ApiError {
    match (session.role(), ApiError::from(e)) {
        (None, ApiError::Forbidden(_)) => ApiError::Unauthenticated,
        (_, mapped) => mapped,
    }
}

async fn grant_consent(
    State(state): State<AppState>,
    headers: HeaderMap,
    Body(req): Body<ConsentRequest>,
) -> Result<Response, ApiError> {
    let session = state.session(&headers)?;
    blocking(move || {
        let patient_id = session.actor_id().unwrap_or_default().to_owned();
        let grant = state
            .compliance
            .grant_consent(&session, &patient_id, &req.grantee_id, req.scope)
            .map_err(|e| consent_error(&session, e))?;
        Ok((StatusCode::CREATED, Json(grant)).into_response())
    })
    .await
}

async fn revoke_consent(
    State(state): State<AppState>,
    headers: HeaderMap,
    UrlPath(grant_id): UrlPath<String>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&headers)?;
    blocking(move || {
        let grant = state
            .compliance
            .revoke_consent(&session, &grant_id)
            .map_err(|e| consent_error(&session, e))?;
        Ok(Json(serde_json::to_value(grant).expect("grant serializes")))
    })
    .await
}

async fn list_consent(
    State(state): State<AppState>,
    headers: HeaderMap,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&headers)?;
    blocking(move || {
        let owner = session.actor_id().unwrap_or_default().to_owned();
        match state.compliance.check_access(
            &session,
            Action::Read,
            ResourceClass::Consent,
            Some(&owner),
        ) {
            Decision::Deny(reason) => Err(ApiError::denied(reason)),
            Decision::Allow => Ok(Json(
                json!({"grants": state.compliance.consents().grants_of(&owner)}),
            )),
        }
    })
    .await
}

async fn verify_audit(
    State(state): State<AppState>,
    headers: HeaderMap,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&headers)?;
    blocking(move || {
        if let Decision::Deny(reason) =
            state
                .compliance
                .check_access(&session, Action::Read, ResourceClass::AuditLog, None)
        {
            return Err(ApiError::denied(reason));
        }
        let outcome = match state.compliance.audit_log().verify() {
            Ok(outcome) => outcome,
            Err(carebridge_core::privacy::AuditError::Tampered { first_bad_seq }) => {
                VerifyOutcome::Tampered { first_bad_seq }
            }
            Err(_) => return Err(ApiError::AuditUnavailable),
        };
        Ok(Json(
            serde_json::to_value(outcome).expect("outcome serializes"),
        ))
    })
    .await
}

async fn get_patient(
    State(state): State<AppState>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<PatientRecord>, ApiError> {
    let session = state.session(&headers)?;
    blocking(move || Ok(Json(state.store.get_patient(&id, &session)?))).await
}

async fn put_patient(
    State(state): State<AppState>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Body(record): Body<PatientRecord>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&headers)?;
    if record.patient_id != id {
        return Err(ApiError::Malformed);
    }
    blocking(move || {
        state.store.put_patient(&record, &session)?;
        Ok(Json(json!({"patient_id": id, "stored": true})))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryRequest {
    note: String,
}

async fn append_history(
    State(state): State<AppState>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Body(req): Body<HistoryRequest>,
) -> Result<Response, ApiError> {
    let session = state.session(&headers)?;
    blocking(move || {
        let entry = state.store.append_history(&id, &req.note, &session)?;
        let mut body = Map::new();
        body.insert("patient_id".into(), json!(id));
        body.insert(
            "entry".into(),
            serde_json::to_value(entry).expect("entry serializes"),
        );
        Ok((StatusCode::CREATED, Json(Value::Object(body))).into_response())
    })
    .await
}
