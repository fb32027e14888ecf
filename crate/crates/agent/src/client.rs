//! Blocking client for an agent's REST admin API.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("agent unreachable at {0}: {1}")]
    Unreachable(String, String),
    #[error("{status} {code}: {detail}")]
    Api { status: u16, code: String, detail: Value },
    #[error("bad reply: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub struct AdminClient {
    base: String,
    api_key: Option<String>,
    http: ureq::Agent,
}

impl AdminClient {
    pub fn new(base: &str) -> Self {
        AdminClient {
            base: base.trim_end_matches('/').to_owned(),
            api_key: None,
            http: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn finish(&self, result: Result<ureq::Response, ureq::Error>) -> Result<Value, ClientError> {
        match result {
            Ok(resp) => resp.into_json().map_err(|e| ClientError::Decode(e.to_string())),
            Err(ureq::Error::Status(status, resp)) => {
                let body: Value = resp.into_json().unwrap_or(Value::Null);
                Err(ClientError::Api {
                    status,
                    code: body["code"].as_str().unwrap_or("UNKNOWN").to_owned(),
                    detail: body.get("detail").cloned().unwrap_or(Value::Null),
                })
            }
            Err(ureq::Error::Transport(t)) => Err(ClientError::Unreachable(self.base.clone(), t.to_string())),
        }
    }

    fn request(&self, method: &str, path: &str) -> ureq::Request {
        let req = self.http.request(method, &format!("{}{path}", self.base));
        match &self.api_key {
            Some(k) => req.set("x-api-key", k),
            None => req,
        }
    }

    pub fn get(&self, path: &str) -> Result<Value, ClientError> {
        self.finish(self.request("GET", path).call())
    }

    pub fn post(&self, path: &str, body: Value) -> Result<Value, ClientError> {
        self.finish(self.request("POST", path).send_json(body))
    }

    pub fn status(&self) -> Result<Value, ClientError> {
        self.get("/status")
    }

    /// Returns `(invitation_url, conn_id)`.
    pub fn create_invitation(&self) -> Result<(String, String), ClientError> {
        let v = self.post("/connections/create-invitation", json!({}))?;
        Ok((text(&v, "invitationUrl")?, text(&v, "connId")?))
    }

    pub fn receive_invitation(&self, url: &str, accept: bool) -> Result<Value, ClientError> {
        self.post("/connections/receive-invitation", json!({"invitationUrl": url, "accept": accept}))
    }

    pub fn enroll(&self, conn_id: &str, role: &str) -> Result<Value, ClientError> {
        self.post(&format!("/connections/{conn_id}/enroll"), json!({"role": role}))
    }

    pub fn register_schema(&self, name: &str, version: &str, attrs: &[&str]) -> Result<String, ClientError> {
        let v = self.post(
            "/ledger/register-schema",
            json!({"name": name, "version": version, "attrNames": attrs}),
        )?;
        text(&v, "schemaId")
    }

    pub fn register_cred_def(&self, schema_id: &str, revocable: bool, max: Option<u64>) -> Result<Value, ClientError> {
        self.post(
            "/ledger/register-cred-def",
            json!({"schemaId": schema_id, "supportRevocation": revocable, "maxCredNum": max}),
        )
    }

    pub fn send_offer(&self, conn_id: &str, cred_def_id: &str, values: &BTreeMap<String, String>) -> Result<Value, ClientError> {
        self.post(
            "/issue-credential/send-offer",
            json!({"connId": conn_id, "credDefId": cred_def_id, "values": values}),
        )
    }

    pub fn respond_offer(&self, cred_ex_id: &str, accept: bool) -> Result<Value, ClientError> {
        self.post(&format!("/issue-credential/{cred_ex_id}/respond"), json!({"accept": accept}))
    }

    pub fn send_proof_request(&self, conn_id: &str, cred_def_id: &str, attrs: &[&str]) -> Result<Value, ClientError> {
        self.post(
            "/present-proof/send-request",
            json!({"connId": conn_id, "credDefId": cred_def_id, "requestedAttrs": attrs}),
        )
    }

    pub fn respond_proof_request(&self, pres_ex_id: &str, decision: Value) -> Result<Value, ClientError> {
        self.post(&format!("/present-proof/{pres_ex_id}/respond"), decision)
    }

    pub fn presentation(&self, pres_ex_id: &str) -> Result<Value, ClientError> {
        self.get(&format!("/present-proof/records/{pres_ex_id}"))
    }

    /// Re-checks a received presentation against the current ledger.
    pub fn reverify(&self, pres_ex_id: &str) -> Result<Value, ClientError> {
        self.post(&format!("/present-proof/{pres_ex_id}/verify"), json!({}))
    }

    pub fn revoke(&self, cred_ex_id: &str) -> Result<Value, ClientError> {
        self.post("/revocation/revoke", json!({"credExId": cred_ex_id, "publish": true}))
    }

    pub fn authorize(&self, pres_ex_id: &str) -> Result<String, ClientError> {
        let v = self.post("/authorize", json!({"presExId": pres_ex_id}))?;
        text(&v, "accessToken")
    }

    pub fn install_authz(&self, config: &Value) -> Result<Value, ClientError> {
        self.post("/authz/config", config.clone())
    }

    pub fn set_auto_accept(&self, offers: bool, requests: bool) -> Result<Value, ClientError> {
        self.post("/settings/auto-accept", json!({"offers": offers, "requests": requests}))
    }

    /// Opens a protected resource with a bearer token.
    pub fn open_resource(&self, resource_id: &str, token: &str) -> Result<Value, ClientError> {
        self.finish(
            self.http
                .get(&format!("{}/resources/{resource_id}", self.base))
                .set("authorization", &format!("Bearer {token}"))
                .call(),
        )
    }
}

/// Invitation from `inviter`, accepted by `invitee`. Returns both
/// connection ids, inviter side first.
pub fn connect(inviter: &AdminClient, invitee: &AdminClient) -> Result<(String, String), ClientError> {
    let (url, inviter_conn) = inviter.create_invitation()?;
    let reply = invitee.receive_invitation(&url, true)?;
    Ok((inviter_conn, text(&reply, "connId")?))
}

fn text(v: &Value, field: &str) -> Result<String, ClientError> {
    v[field]
        .as_str()
        .map(String::from)
        .ok_or_else(|| ClientError::Decode(format!("missing {field}")))
}
