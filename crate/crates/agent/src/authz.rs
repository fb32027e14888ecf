//! Per-verifier OIDC-style provider: turns a verified presentation exchange
//! into a signed, expiring, single-use access token and enforces RBAC.
//!
//! Tokens are compact JWS strings (`header.claims.signature`, base64url)
//! signed with EdDSA under the provider's own key.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use bdimhs_core::crypto::{self, KeyPair, PublicKey, Signature};
use bdimhs_core::encoding::{b64_array, b64_decode, b64_encode};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::records::{PresentationExchange, PresentationExchangeState};

pub const DEFAULT_TOKEN_LIFETIME_S: u64 = 300;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuthzError {
    #[error("presentation exchange is not verified")]
    NotVerified,
    #[error("no role mapping rule matches the presentation")]
    NoRole,
    #[error("token expired")]
    Expired,
    #[error("invalid token: {0}")]
    InvalidToken(String),
    #[error("token nonce already used")]
    ReplayRejected,
    #[error("unknown resource {0}")]
    NotFound(String),
    #[error("invalid authorization config: {0}")]
    InvalidConfig(String),
}

impl AuthzError {
    pub fn http_status(&self) -> u16 {
        match self {
            AuthzError::NotFound(_) => 404,
            AuthzError::NotVerified | AuthzError::NoRole => 403,
            AuthzError::InvalidConfig(_) => 500,
            _ => 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoleMappingRule {
    pub cred_def_id: String,
    #[serde(default)]
    pub required_attrs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr_equals: Option<BTreeMap<String, String>>,
    pub grants: Vec<String>,
}

impl RoleMappingRule {
    pub fn matches(&self, cred_def_id: &str, disclosed: &BTreeMap<String, String>) -> bool {
        self.cred_def_id == cred_def_id
            && self.required_attrs.iter().all(|a| disclosed.contains_key(a))
            && self
                .attr_equals
                .iter()
                .flatten()
                .all(|(k, v)| disclosed.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtectedResource {
    pub resource_id: String,
    pub allowed_roles: Vec<String>,
}

/// Rules file contents.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuthzConfig {
    pub rules: Vec<RoleMappingRule>,
    pub resources: Vec<ProtectedResource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_lifetime_s: Option<u64>,
}

impl AuthzConfig {
    pub fn load(path: &Path) -> Result<Self, AuthzError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuthzError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, AuthzError> {
        let config: AuthzConfig =
            serde_json::from_str(text).map_err(|e| AuthzError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AuthzError> {
        if let Some(rule) = self.rules.iter().find(|r| r.grants.is_empty()) {
            return Err(AuthzError::InvalidConfig(format!(
                "rule for {} grants nothing",
                rule.cred_def_id
            )));
        }
        if let Some(res) = self.resources.iter().find(|r| r.allowed_roles.is_empty()) {
            return Err(AuthzError::InvalidConfig(format!(
                "resource {} allows no role",
                res.resource_id
            )));
        }
        Ok(())
    }
}

/// Union of the grants of every rule matching the disclosure, sorted.
pub fn matching_roles(
    rules: &[RoleMappingRule],
    cred_def_id: &str,
    disclosed: &BTreeMap<String, String>,
) -> Vec<String> {
    rules
        .iter()
        .filter(|r| r.matches(cred_def_id, disclosed))
        .flat_map(|r| r.grants.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenClaims {
    pub iss: String,
    pub sub: String,
    pub roles: Vec<String>,
    pub iat: u64,
    pub exp: u64,
    #[serde(with = "b64_array")]
    pub nonce: [u8; 16],
    pub disclosed: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Allow,
    Deny,
}

pub type SecondsClock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs()
}

/// Splits a token and decodes header and claims without checking anything.
pub fn decode_unverified(token: &str) -> Result<(Value, TokenClaims), AuthzError> {
    let parts: Vec<&str> = token.split('.').collect();
    let [header, claims, _sig] = parts.as_slice() else {
        return Err(AuthzError::InvalidToken("expected three sections".into()));
    };
    let decode = |s: &str| b64_decode(s).map_err(|_| AuthzError::InvalidToken("bad base64url".into()));
    let header: Value = serde_json::from_slice(&decode(header)?)
        .map_err(|_| AuthzError::InvalidToken("bad header".into()))?;
    let claims: TokenClaims = serde_json::from_slice(&decode(claims)?)
        .map_err(|_| AuthzError::InvalidToken("bad claims".into()))?;
    Ok((header, claims))
}

pub struct AuthzProvider {
    key: KeyPair,
    rules: Vec<RoleMappingRule>,
    resources: BTreeMap<String, ProtectedResource>,
    lifetime_s: u64,
    clock: SecondsClock,
    /// Nonce → exp of tokens already presented.
    seen: Mutex<HashMap<[u8; 16], u64>>,
}

impl AuthzProvider {
    pub fn new(key: KeyPair, config: AuthzConfig) -> Result<Self, AuthzError> {
        Self::with_clock(key, config, Arc::new(system_seconds))
    }

    pub fn with_clock(key: KeyPair, config: AuthzConfig, clock: SecondsClock) -> Result<Self, AuthzError> {
        config.validate()?;
        Ok(AuthzProvider {
            key,
            rules: config.rules,
            resources: config
                .resources
                .into_iter()
                .map(|r| (r.resource_id.clone(), r))
                .collect(),
            lifetime_s: config.token_lifetime_s.unwrap_or(DEFAULT_TOKEN_LIFETIME_S),
            clock,
            seen: Mutex::new(HashMap::new()),
        })
    }

    pub fn issuer_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn rules(&self) -> &[RoleMappingRule] {
        &self.rules
    }

    /// Issues a token for a VERIFIED_TRUE exchange whose holder is `subject`.
    pub fn authorize(&self, exchange: &PresentationExchange, subject: &str) -> Result<String, AuthzError> {
        let result = match (&exchange.state, &exchange.result) {
            (PresentationExchangeState::VerifiedTrue, Some(r)) if r.verified => r,
            _ => return Err(AuthzError::NotVerified),
        };
        let roles = matching_roles(&self.rules, &exchange.request.cred_def_id, &result.disclosed);
        if roles.is_empty() {
            return Err(AuthzError::NoRole);
        }
        let iat = (self.clock)();
        let claims = TokenClaims {
            iss: self.key.did(),
            sub: subject.to_owned(),
            roles,
            iat,
            exp: iat + self.lifetime_s,
            nonce: crypto::random_bytes(),
            disclosed: result.disclosed.clone(),
        };
        Ok(self.sign(&claims))
    }

    pub fn sign(&self, claims: &TokenClaims) -> String {
        let header = json!({"alg": "EdDSA", "typ": "JWT", "kid": self.key.did()});
        let signing_input = format!(
            "{}.{}",
            b64_encode(&serde_json::to_vec(&header).expect("header serializes")),
            b64_encode(&serde_json::to_vec(claims).expect("claims serialize"))
        );
        let signature = self.key.sign(signing_input.as_bytes());
        format!("{signing_input}.{}", b64_encode(&signature.0))
    }

    /// Accepts iff the signature verifies, the token is unexpired and its
    /// nonce is unseen; marks the nonce seen.
    pub fn validate_token(&self, token: &str) -> Result<TokenClaims, AuthzError> {
        let claims = self.check_token(token)?;
        let now = (self.clock)();
        let mut seen = self.seen.lock().unwrap();
        seen.retain(|_, exp| *exp > now);
        if seen.insert(claims.nonce, claims.exp).is_some() {
            return Err(AuthzError::ReplayRejected);
        }
        Ok(claims)
    }

    /// Same checks as `validate_token` without consuming the nonce.
    pub fn inspect_token(&self, token: &str) -> Result<TokenClaims, AuthzError> {
        let claims = self.check_token(token)?;
        if self.seen.lock().unwrap().contains_key(&claims.nonce) {
            return Err(AuthzError::ReplayRejected);
        }
        Ok(claims)
    }

    fn check_token(&self, token: &str) -> Result<TokenClaims, AuthzError> {
        let (header, claims) = decode_unverified(token)?;
        if header["alg"] != "EdDSA" {
            return Err(AuthzError::InvalidToken("unsupported alg".into()));
        }
        let (signing_input, sig) = token.rsplit_once('.').expect("three sections");
        let sig: [u8; 64] = b64_decode(sig)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| AuthzError::InvalidToken("bad signature encoding".into()))?;
        if !crypto::verify(&self.key.public_key(), signing_input.as_bytes(), &Signature(sig)) {
            return Err(AuthzError::InvalidToken("signature does not verify".into()));
        }
        if claims.exp <= claims.iat {
            return Err(AuthzError::InvalidToken("exp not after iat".into()));
        }
        if (self.clock)() >= claims.exp {
            return Err(AuthzError::Expired);
        }
        Ok(claims)
    }

    pub fn check_access(&self, claims: &TokenClaims, resource_id: &str) -> Result<Access, AuthzError> {
        let resource = self
            .resources
            .get(resource_id)
            .ok_or_else(|| AuthzError::NotFound(resource_id.to_owned()))?;
        Ok(
            if claims.roles.iter().any(|r| resource.allowed_roles.contains(r)) {
                Access::Allow
            } else {
                Access::Deny
            },
        )
    }
}
