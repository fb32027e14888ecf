//! REST admin API for controllers, plus the inbound DIDComm endpoint.
//!
//! Every route except `/didcomm` and `/status` requires the `x-api-key`
//! header when a key is configured. `/events` also accepts `?apiKey=` since
//! browser EventSource cannot set headers.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::body::Bytes;
use axum::{Json, Router};
use bdimhs_core::anoncreds::{Schema, VerificationResult};
use bdimhs_core::crypto::{KeyPair, SealedEnvelope};
use bdimhs_core::ledger::{Ledger, Receipt, Role};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio_stream::wrappers::BroadcastStream;
use uuid::Uuid;

use crate::agent::{Agent, AgentConfig, ProofDecision, RegisteredCredDef, RevocationOutcome};
use crate::authz::{Access, AuthzConfig, AuthzError, AuthzProvider};
use crate::error::AgentError;
use crate::records::{Connection, CredentialExchange, PresentationExchange, PresentationExchangeState, StoredCredential};
use crate::server::{self, blocking, ServerHandle};
use crate::transport::{HttpTransport, Inbox};
use crate::wallet::Wallet;

#[derive(Clone)]
pub struct AdminState {
    pub agent: Arc<Agent>,
    pub api_key: Option<String>,
    pub gauge: Arc<Gauge>,
}

/// Concurrent admin requests in flight, and the peak seen.
#[derive(Debug, Default)]
pub struct Gauge {
    current: AtomicI64,
    peak: AtomicI64,
}

impl Gauge {
    pub fn current(&self) -> i64 {
        self.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> i64 {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn reset_peak(&self) {
        self.peak.store(self.current(), Ordering::SeqCst);
    }
}

struct GaugeGuard<'a>(&'a Gauge);

impl Drop for GaugeGuard<'_> {
    fn drop(&mut self) {
        self.0.current.fetch_sub(1, Ordering::SeqCst);
    }
}

pub enum ApiError {
    Agent(AgentError),
    Authz(AuthzError),
    MissingKey,
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        ApiError::Agent(e)
    }
}

impl From<AuthzError> for ApiError {
    fn from(e: AuthzError) -> Self {
        ApiError::Authz(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::Agent(e) => (e.http_status(), serde_json::to_value(&e).unwrap_or_default()),
            ApiError::Authz(e) => (e.http_status(), serde_json::to_value(&e).unwrap_or_default()),
            ApiError::MissingKey => (401, json!({"code": "UNAUTHENTICATED", "detail": "x-api-key required"})),
        };
        (StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), Json(body)).into_response()
    }
}

type Reply<T> = Result<Json<T>, ApiError>;

async fn run<T, F>(agent: Arc<Agent>, f: F) -> Reply<T>
where
    F: FnOnce(&Agent) -> Result<T, AgentError> + Send + 'static,
    T: Send + 'static,
{
    blocking(move || f(&agent)).await.map(Json).map_err(ApiError::Agent)
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateInvitationBody {
    #[serde(default)]
    pub puzzle_difficulty: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateInvitationReply {
    pub invitation_url: String,
    pub conn_id: Uuid,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReceiveInvitationBody {
    pub invitation_url: String,
    pub accept: bool,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SendOfferBody {
    pub conn_id: Uuid,
    pub cred_def_id: String,
    pub values: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
pub struct AcceptBody {
    pub accept: bool,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SendRequestBody {
    pub conn_id: Uuid,
    pub cred_def_id: String,
    pub requested_attrs: Vec<String>,
    #[serde(default)]
    pub non_revoked_at_time: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevokeBody {
    pub cred_ex_id: Uuid,
    #[serde(default = "yes")]
    pub publish: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisterSchemaBody {
    pub name: String,
    pub version: String,
    pub attr_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisterSchemaReply {
    pub schema_id: String,
    pub schema: Schema,
    pub receipt: Receipt,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisterCredDefBody {
    pub schema_id: String,
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default)]
    pub support_revocation: bool,
    #[serde(default)]
    pub max_cred_num: Option<u64>,
}

fn default_tag() -> String {
    "default".into()
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnrollBody {
    pub role: Role,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnrollReply {
    pub did: String,
    pub receipt: Receipt,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentStatus {
    pub label: String,
    pub endpoint: String,
    pub public_did: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuthorizeBody {
    pub pres_ex_id: Uuid,
}

#[derive(Debug, Deserialize)]
pub struct IntrospectBody {
    pub token: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventsQuery {
    /// Replays history from this sequence number before live events.
    #[serde(default)]
    pub since: Option<u64>,
    #[serde(default)]
    pub api_key: Option<String>,
}

pub fn admin_router(agent: Arc<Agent>, api_key: Option<String>) -> (Router, Arc<Gauge>) {
    let gauge = Arc::new(Gauge::default());
    let state = AdminState {
        agent,
        api_key,
        gauge: gauge.clone(),
    };
    let guarded = Router::new()
        .route("/connections/create-invitation", post(create_invitation))
        .route("/connections/receive-invitation", post(receive_invitation))
        .route("/connections", get(list_connections))
        .route("/connections/{conn_id}", get(get_connection))
        .route("/connections/{conn_id}/enroll", post(enroll))
        .route("/issue-credential/send-offer", post(send_offer))
        .route("/issue-credential/records", get(list_cred_ex))
        .route("/issue-credential/records/{id}", get(get_cred_ex))
        .route("/issue-credential/{id}/respond", post(respond_offer))
        .route("/credentials", get(list_credentials))
        .route("/present-proof/send-request", post(send_request))
        .route("/present-proof/records", get(list_pres_ex))
        .route("/present-proof/records/{id}", get(get_pres_ex))
        .route("/present-proof/{id}/respond", post(respond_request))
        .route("/present-proof/{id}/verify", post(reverify))
        .route("/revocation/revoke", post(revoke))
        .route("/revocation/refresh", post(refresh_revocation))
        .route("/ledger/register-schema", post(register_schema))
        .route("/ledger/register-cred-def", post(register_cred_def))
        .route("/authorize", post(authorize))
        .route("/introspect", post(introspect))
        .route("/authz/config", post(install_authz))
        .route("/settings/auto-accept", post(auto_accept))
        .route("/events/history", get(event_history))
        .route("/metrics/inflight", get(inflight))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_key));
    let router = Router::new()
        .merge(guarded)
        .route("/events", get(events))
        .route("/resources/{id}", get(resource))
        .route("/didcomm", post(didcomm))
        .route("/status", get(status))
        .layer(middleware::from_fn_with_state(state.clone(), count_inflight))
        .with_state(state);
    (router, gauge)
}

async fn require_key(State(s): State<AdminState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(key) = &s.api_key {
        let given = headers.get("x-api-key").and_then(|v| v.to_str().ok());
        if given != Some(key.as_str()) {
            return ApiError::MissingKey.into_response();
        }
    }
    next.run(req).await
}

async fn count_inflight(State(s): State<AdminState>, req: Request, next: Next) -> Response {
    let path = req.uri().path();
    if path == "/metrics/inflight" || path == "/events" || path == "/didcomm" {
        return next.run(req).await;
    }
    let now = s.gauge.current.fetch_add(1, Ordering::SeqCst) + 1;
    s.gauge.peak.fetch_max(now, Ordering::SeqCst);
    let _guard = GaugeGuard(&s.gauge);
    next.run(req).await
}

async fn didcomm(State(s): State<AdminState>, Json(env): Json<SealedEnvelope>) -> Reply<Value> {
    run(s.agent, move |a| a.receive(env).map(|()| json!({"ok": true}))).await
}

async fn status(State(s): State<AdminState>) -> Json<AgentStatus> {
    let a = s.agent;
    Json(AgentStatus {
        label: a.label().to_owned(),
        endpoint: a.endpoint().to_owned(),
        public_did: a.public_did(),
    })
}

async fn create_invitation(
    State(s): State<AdminState>,
    body: Option<Json<CreateInvitationBody>>,
) -> Reply<CreateInvitationReply> {
    let difficulty = body.and_then(|b| b.0.puzzle_difficulty);
    run(s.agent, move |a| {
        let (conn, invitation_url) = a.create_invitation(difficulty)?;
        Ok(CreateInvitationReply {
            invitation_url,
            conn_id: conn.conn_id,
        })
    })
    .await
}

async fn receive_invitation(State(s): State<AdminState>, Json(b): Json<ReceiveInvitationBody>) -> Reply<Connection> {
    run(s.agent, move |a| a.receive_invitation_url(&b.invitation_url, b.accept)).await
}

async fn list_connections(State(s): State<AdminState>) -> Json<Vec<Connection>> {
    Json(s.agent.connections())
}

async fn get_connection(State(s): State<AdminState>, Path(id): Path<Uuid>) -> Reply<Connection> {
    s.agent.connection(id).map(Json).map_err(ApiError::Agent)
}

async fn enroll(State(s): State<AdminState>, Path(id): Path<Uuid>, Json(b): Json<EnrollBody>) -> Reply<EnrollReply> {
    run(s.agent, move |a| {
        let (did, receipt) = a.request_enrollment(id, b.role)?;
        Ok(EnrollReply { did, receipt })
    })
    .await
}

async fn send_offer(State(s): State<AdminState>, Json(b): Json<SendOfferBody>) -> Reply<CredentialExchange> {
    run(s.agent, move |a| a.send_offer(b.conn_id, &b.cred_def_id, &b.values)).await
}

async fn list_cred_ex(State(s): State<AdminState>) -> Json<Vec<CredentialExchange>> {
    Json(s.agent.credential_exchanges())
}

async fn get_cred_ex(State(s): State<AdminState>, Path(id): Path<Uuid>) -> Reply<CredentialExchange> {
    s.agent.credential_exchange(id).map(Json).map_err(ApiError::Agent)
}

async fn respond_offer(
    State(s): State<AdminState>,
    Path(id): Path<Uuid>,
    Json(b): Json<AcceptBody>,
) -> Reply<CredentialExchange> {
    run(s.agent, move |a| a.respond_offer(id, b.accept)).await
}

async fn list_credentials(State(s): State<AdminState>) -> Json<Vec<StoredCredential>> {
    Json(s.agent.credentials())
}

async fn send_request(State(s): State<AdminState>, Json(b): Json<SendRequestBody>) -> Reply<PresentationExchange> {
    run(s.agent, move |a| {
        a.send_proof_request(b.conn_id, &b.cred_def_id, &b.requested_attrs, b.non_revoked_at_time)
    })
    .await
}

async fn list_pres_ex(State(s): State<AdminState>) -> Json<Vec<PresentationExchange>> {
    Json(s.agent.presentation_exchanges())
}

async fn get_pres_ex(State(s): State<AdminState>, Path(id): Path<Uuid>) -> Reply<PresentationExchange> {
    s.agent.presentation_exchange(id).map(Json).map_err(ApiError::Agent)
}

async fn respond_request(
    State(s): State<AdminState>,
    Path(id): Path<Uuid>,
    Json(b): Json<ProofDecision>,
) -> Reply<PresentationExchange> {
    run(s.agent, move |a| a.respond_proof_request(id, &b)).await
}

async fn revoke(State(s): State<AdminState>, Json(b): Json<RevokeBody>) -> Reply<RevocationOutcome> {
    run(s.agent, move |a| a.revoke(b.cred_ex_id, b.publish)).await
}

// Bodyless POST handlers still take the body: hyper will not reuse a
// connection with unread request bytes, and ureq does not retry POSTs.
async fn refresh_revocation(State(s): State<AdminState>, _body: Bytes) -> Reply<Vec<Uuid>> {
    run(s.agent, |a| a.refresh_revocation_status()).await
}

async fn register_schema(State(s): State<AdminState>, Json(b): Json<RegisterSchemaBody>) -> Reply<RegisterSchemaReply> {
    run(s.agent, move |a| {
        let (schema, receipt) = a.register_schema(&b.name, &b.version, &b.attr_names)?;
        Ok(RegisterSchemaReply {
            schema_id: schema.schema_id.clone(),
            schema,
            receipt,
        })
    })
    .await
}

async fn register_cred_def(State(s): State<AdminState>, Json(b): Json<RegisterCredDefBody>) -> Reply<RegisteredCredDef> {
    run(s.agent, move |a| {
        a.register_cred_def(&b.schema_id, &b.tag, b.support_revocation, b.max_cred_num)
    })
    .await
}

async fn authorize(State(s): State<AdminState>, Json(b): Json<AuthorizeBody>) -> Reply<Value> {
    let provider = s
        .agent
        .authz()
        .ok_or_else(|| AuthzError::InvalidConfig("no authorization rules loaded".into()))?;
    let exchange = s.agent.presentation_exchange(b.pres_ex_id)?;
    // A verified exchange must still verify against the current ledger,
    // so a revoked credential no longer yields tokens.
    if exchange.state == PresentationExchangeState::VerifiedTrue {
        let agent = s.agent.clone();
        let id = b.pres_ex_id;
        let fresh = blocking(move || agent.reverify_presentation(id)).await?;
        if !fresh.verified {
            return Err(AuthzError::NotVerified.into());
        }
    }
    let subject = s
        .agent
        .connection(exchange.conn_id)?
        .their_did
        .unwrap_or_default();
    let token = provider.authorize(&exchange, &subject)?;
    Ok(Json(json!({"accessToken": token})))
}

async fn reverify(State(s): State<AdminState>, Path(id): Path<Uuid>, _body: Bytes) -> Reply<VerificationResult> {
    run(s.agent, move |a| a.reverify_presentation(id)).await
}

/// Installs role-mapping rules under a fresh provider signing key.
async fn install_authz(State(s): State<AdminState>, Json(config): Json<AuthzConfig>) -> Reply<Value> {
    let provider = AuthzProvider::new(KeyPair::random(), config)?;
    let issuer_key = provider.issuer_key();
    s.agent.set_authz(provider);
    Ok(Json(json!({"issuerKey": issuer_key})))
}

#[derive(Debug, Deserialize)]
pub struct AutoAcceptBody {
    #[serde(default)]
    pub offers: bool,
    #[serde(default)]
    pub requests: bool,
}

async fn auto_accept(State(s): State<AdminState>, Json(b): Json<AutoAcceptBody>) -> Json<Value> {
    s.agent.set_auto_accept(b.offers, b.requests);
    Json(json!({"offers": b.offers, "requests": b.requests}))
}

async fn introspect(State(s): State<AdminState>, Json(b): Json<IntrospectBody>) -> Result<Json<Value>, ApiError> {
    let provider = s
        .agent
        .authz()
        .ok_or_else(|| AuthzError::InvalidConfig("no authorization rules loaded".into()))?;
    let claims = provider.inspect_token(&b.token)?;
    Ok(Json(serde_json::to_value(claims).unwrap_or_default()))
}

/// Resource access is gated by the bearer token alone.
async fn resource(State(s): State<AdminState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    let provider = s
        .agent
        .authz()
        .ok_or_else(|| AuthzError::InvalidConfig("no authorization rules loaded".into()))?;
    let token = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| AuthzError::InvalidToken("missing bearer token".into()))?;
    // The nonce is spent only on a successful open.
    let claims = provider.inspect_token(token)?;
    match provider.check_access(&claims, &id)? {
        Access::Allow => {
            provider.validate_token(token)?;
            Ok(Json(json!({"resourceId": id, "access": "allow", "sub": claims.sub, "roles": claims.roles})))
        }
        Access::Deny => Err(ApiError::Agent(AgentError::Unauthorized(format!(
            "roles {:?} do not open {id}",
            claims.roles
        )))),
    }
}

async fn event_history(State(s): State<AdminState>, Query(q): Query<EventsQuery>) -> Json<Value> {
    let since = q.since.unwrap_or(0);
    let events: Vec<_> = s.agent.events().history().into_iter().filter(|e| e.seq >= since).collect();
    Json(serde_json::to_value(events).unwrap_or_default())
}

async fn inflight(State(s): State<AdminState>) -> Json<Value> {
    Json(json!({"current": s.gauge.current(), "peak": s.gauge.peak()}))
}

async fn events(
    State(s): State<AdminState>,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    if let Some(key) = &s.api_key {
        let header = headers.get("x-api-key").and_then(|v| v.to_str().ok());
        if header != Some(key.as_str()) && q.api_key.as_deref() != Some(key.as_str()) {
            return Err(ApiError::MissingKey);
        }
    }
    // Subscribe before reading history so nothing falls in between.
    let live = BroadcastStream::new(s.agent.events().subscribe());
    let backlog: Vec<_> = match q.since {
        Some(since) => s.agent.events().history().into_iter().filter(|e| e.seq >= since).collect(),
        None => Vec::new(),
    };
    let mut last = backlog.last().map(|e| e.seq);
    let live = live.filter_map(move |item| {
        let keep = match item {
            Ok(e) if last.is_none_or(|l| e.seq > l) => {
                last = Some(e.seq);
                Some(e)
            }
            _ => None,
        };
        async move { keep }
    });
    let stream = stream::iter(backlog).chain(live).map(|e| {
        Ok(Event::default()
            .event(e.topic.as_str())
            .id(e.seq.to_string())
            .json_data(&e)
            .expect("event serializes"))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub struct HttpAgentOptions {
    pub bind: String,
    /// Advertised host; defaults to the bound address.
    pub public_host: Option<String>,
    pub api_key: Option<String>,
    pub webhook_url: Option<String>,
}

impl Default for HttpAgentOptions {
    fn default() -> Self {
        HttpAgentOptions {
            bind: "127.0.0.1:0".into(),
            public_host: None,
            api_key: None,
            webhook_url: None,
        }
    }
}

pub struct HttpAgent {
    pub agent: Arc<Agent>,
    pub gauge: Arc<Gauge>,
    pub server: ServerHandle,
}

impl HttpAgent {
    pub fn admin_url(&self) -> String {
        self.server.base_url()
    }
}

/// Binds first so the agent can advertise its real `/didcomm` endpoint.
pub fn spawn_http_agent(
    mut config: AgentConfig,
    wallet: Option<Wallet>,
    ledger: Arc<dyn Ledger>,
    options: HttpAgentOptions,
) -> Result<HttpAgent, AgentError> {
    let listener = server::bind(&options.bind).map_err(|e| AgentError::Transport(format!("bind {}: {e}", options.bind)))?;
    let addr = listener.local_addr().map_err(|e| AgentError::Transport(e.to_string()))?;
    let host = options.public_host.unwrap_or_else(|| addr.to_string());
    config.endpoint = format!("http://{host}/didcomm");
    let wallet = wallet.unwrap_or_else(|| Wallet::new(&config.label));
    let agent = Agent::with_wallet(config, wallet, ledger, HttpTransport::new())?;
    if let Some(url) = &options.webhook_url {
        agent.events().set_webhook_url(url);
    }
    let (router, gauge) = admin_router(agent.clone(), options.api_key);
    let server = server::spawn(listener, router).map_err(|e| AgentError::Transport(e.to_string()))?;
    Ok(HttpAgent { agent, gauge, server })
}
