//! HTTP face of a validator pool, and the client agents use to reach it.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bdimhs_core::anoncreds::{CredentialDefinition, RevRegState, RevocationRegistryDefinition};
use bdimhs_core::ledger::{
    export_audit_lines, LedgerError, LedgerPool, LedgerReader, LedgerWriter, NymRecord, Receipt,
    SchemaRecord, TxnRequest,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::server::blocking;

pub fn ledger_status(err: &LedgerError) -> StatusCode {
    match err {
        LedgerError::NotFound(_) => StatusCode::NOT_FOUND,
        LedgerError::Unauthorized(_) | LedgerError::InvalidSignature => StatusCode::FORBIDDEN,
        LedgerError::DuplicateRequest => StatusCode::CONFLICT,
        LedgerError::NoConsensus { .. } | LedgerError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        LedgerError::CorruptLog(_) | LedgerError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

struct Failure(LedgerError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (ledger_status(&self.0), Json(self.0)).into_response()
    }
}

type Reply<T> = Result<Json<T>, Failure>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PoolHealth {
    pub nodes: usize,
    pub live: usize,
    pub quorum: usize,
    pub max_faulty: usize,
    pub txn_count: u64,
}

#[derive(Deserialize)]
struct IdQuery {
    id: String,
    at: Option<u64>,
}

#[derive(Deserialize)]
struct KeyQuery {
    key: String,
}

fn read<T, F>(pool: Arc<LedgerPool>, f: F) -> impl std::future::Future<Output = Reply<T>>
where
    F: FnOnce(&LedgerPool) -> Result<T, LedgerError> + Send + 'static,
    T: Send + 'static,
{
    async move { blocking(move || f(&pool)).await.map(Json).map_err(Failure) }
}

pub fn ledger_router(pool: Arc<LedgerPool>) -> Router {
    Router::new()
        .route(
            "/submit",
            post(|State(p): State<Arc<LedgerPool>>, Json(req): Json<TxnRequest>| {
                read(p, move |p| p.submit(req))
            }),
        )
        .route(
            "/nym",
            get(|State(p): State<Arc<LedgerPool>>, Query(q): Query<IdQuery>| read(p, move |p| p.get_nym(&q.id))),
        )
        .route(
            "/schema",
            get(|State(p): State<Arc<LedgerPool>>, Query(q): Query<IdQuery>| {
                read(p, move |p| p.get_schema_record(&q.id))
            }),
        )
        .route(
            "/cred-def",
            get(|State(p): State<Arc<LedgerPool>>, Query(q): Query<IdQuery>| {
                read(p, move |p| p.get_cred_def(&q.id))
            }),
        )
        .route(
            "/rev-reg-def",
            get(|State(p): State<Arc<LedgerPool>>, Query(q): Query<IdQuery>| {
                read(p, move |p| p.get_rev_reg_def(&q.id))
            }),
        )
        .route(
            "/rev-reg",
            get(|State(p): State<Arc<LedgerPool>>, Query(q): Query<IdQuery>| {
                read(p, move |p| p.get_rev_reg(&q.id, q.at))
            }),
        )
        .route(
            "/config",
            get(|State(p): State<Arc<LedgerPool>>, Query(q): Query<KeyQuery>| {
                read(p, move |p| p.get_config(&q.key))
            }),
        )
        .route(
            "/audit",
            get(|State(p): State<Arc<LedgerPool>>| async move {
                blocking(move || export_audit_lines(&p.audit_log())).await
            }),
        )
        .route(
            "/health",
            get(|State(p): State<Arc<LedgerPool>>| {
                read(p, |p| {
                    Ok(PoolHealth {
                        nodes: p.node_count(),
                        live: p.live_count(),
                        quorum: p.quorum(),
                        max_faulty: p.max_faulty(),
                        txn_count: p.audit_log().len() as u64,
                    })
                })
            }),
        )
        .with_state(pool)
}

/// `Ledger` over HTTP. Any transport failure reads as `Unavailable`.
pub struct LedgerClient {
    base: String,
    http: ureq::Agent,
}

impl LedgerClient {
    pub fn new(base_url: &str) -> Self {
        LedgerClient {
            base: base_url.trim_end_matches('/').to_owned(),
            http: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(3))
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn finish<T: DeserializeOwned>(&self, result: Result<ureq::Response, ureq::Error>) -> Result<T, LedgerError> {
        match result {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| LedgerError::Unavailable(format!("bad response body: {e}"))),
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err(serde_json::from_str(&body)
                    .unwrap_or_else(|_| LedgerError::Unavailable(format!("HTTP {status}: {body}"))))
            }
            Err(ureq::Error::Transport(t)) => Err(LedgerError::Unavailable(t.to_string())),
        }
    }

    fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<T, LedgerError> {
        let mut req = self.http.get(&format!("{}{path}", self.base));
        for (k, v) in query {
            req = req.query(k, v);
        }
        self.finish(req.call())
    }

    pub fn health(&self) -> Result<PoolHealth, LedgerError> {
        self.get("/health", &[])
    }

    pub fn audit_lines(&self) -> Result<String, LedgerError> {
        match self.http.get(&format!("{}/audit", self.base)).call() {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| LedgerError::Unavailable(e.to_string())),
            Err(e) => self.finish::<Value>(Err(e)).map(|_| String::new()),
        }
    }
}

impl LedgerReader for LedgerClient {
    fn get_nym(&self, did: &str) -> Result<NymRecord, LedgerError> {
        self.get("/nym", &[("id", did.to_owned())])
    }

    fn get_schema_record(&self, schema_id: &str) -> Result<SchemaRecord, LedgerError> {
        self.get("/schema", &[("id", schema_id.to_owned())])
    }

    fn get_cred_def(&self, cred_def_id: &str) -> Result<CredentialDefinition, LedgerError> {
        self.get("/cred-def", &[("id", cred_def_id.to_owned())])
    }

    fn get_rev_reg_def(&self, rev_reg_id: &str) -> Result<RevocationRegistryDefinition, LedgerError> {
        self.get("/rev-reg-def", &[("id", rev_reg_id.to_owned())])
    }

    fn get_rev_reg(&self, rev_reg_id: &str, at: Option<u64>) -> Result<RevRegState, LedgerError> {
        let mut query = vec![("id", rev_reg_id.to_owned())];
        if let Some(at) = at {
            query.push(("at", at.to_string()));
        }
        self.get("/rev-reg", &query)
    }

    fn get_config(&self, key: &str) -> Result<Value, LedgerError> {
        self.get("/config", &[("key", key.to_owned())])
    }
}

impl LedgerWriter for LedgerClient {
    fn submit(&self, request: TxnRequest) -> Result<Receipt, LedgerError> {
        self.finish(
            self.http
                .post(&format!("{}/submit", self.base))
                .send_json(&request),
        )
    }
}
