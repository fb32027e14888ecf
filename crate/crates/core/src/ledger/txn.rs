use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::crypto::{self, Digest, Domain, KeyPair, PublicKey, Signature};
use crate::encoding::{b64_array, canonical_json};

/// Ledger permission level. Declaration order is privilege order, so the
/// derived `Ord` gives NONE < ENDORSER < STEWARD < TRUSTEE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    None,
    Endorser,
    Steward,
    Trustee,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Trustee, Role::Steward, Role::Endorser, Role::None];
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TRUSTEE" => Ok(Role::Trustee),
            "STEWARD" => Ok(Role::Steward),
            "ENDORSER" | "TRUST_ANCHOR" => Ok(Role::Endorser),
            "NONE" => Ok(Role::None),
            other => Err(format!("unknown role {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxnKind {
    Nym,
    Schema,
    CredDef,
    RevRegDef,
    RevRegEntry,
    Node,
    Config,
}

impl TxnKind {
    pub const ALL: [TxnKind; 7] = [
        TxnKind::Nym,
        TxnKind::Schema,
        TxnKind::CredDef,
        TxnKind::RevRegDef,
        TxnKind::RevRegEntry,
        TxnKind::Node,
        TxnKind::Config,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NymPayload {
    pub dest: String,
    pub verkey: PublicKey,
    /// Present only when the transaction assigns a role.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeRecord {
    pub alias: String,
    /// Base58.
    pub node_verkey: String,
    /// "host:port".
    pub endpoint: String,
    #[serde(default = "default_services")]
    pub services: Vec<String>,
}

fn default_services() -> Vec<String> {
    vec!["VALIDATOR".to_owned()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NymRecord {
    pub did: String,
    pub verkey: PublicKey,
    pub role: Role,
    pub added_by: String,
}

/// A write request as signed by its author, before sequencing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxnRequest {
    pub kind: TxnKind,
    pub payload: Value,
    pub author_did: String,
    pub req_id: u64,
    pub signature: Signature,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SigningView<'a> {
    kind: TxnKind,
    payload: &'a Value,
    author_did: &'a str,
    req_id: u64,
}

pub fn request_signing_bytes(kind: TxnKind, payload: &Value, author_did: &str, req_id: u64) -> Vec<u8> {
    canonical_json(&SigningView {
        kind,
        payload,
        author_did,
        req_id,
    })
}

impl TxnRequest {
    pub fn new<P: Serialize>(kind: TxnKind, payload: &P, author_did: &str, author: &KeyPair) -> Self {
        let payload = serde_json::to_value(payload).expect("payload serializes");
        let req_id = u64::from_be_bytes(crypto::random_bytes());
        let signature = author.sign(&request_signing_bytes(kind, &payload, author_did, req_id));
        TxnRequest {
            kind,
            payload,
            author_did: author_did.to_owned(),
            req_id,
            signature,
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        request_signing_bytes(self.kind, &self.payload, &self.author_did, self.req_id)
    }
}

/// A sequenced audit-ledger entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub seq_no: u64,
    pub txn_time: u64,
    pub kind: TxnKind,
    pub payload: Value,
    pub author_did: String,
    pub req_id: u64,
    /// Absent only on genesis entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Signature>,
    #[serde(with = "b64_array")]
    pub prev_hash: Digest,
}

impl Transaction {
    pub fn hash(&self) -> Digest {
        crypto::tagged_hash(Domain::TxnChain, &[&canonical_json(self)])
    }

    pub fn is_genesis(&self) -> bool {
        self.signature.is_none()
    }

    pub fn request(&self) -> Option<TxnRequest> {
        Some(TxnRequest {
            kind: self.kind,
            payload: self.payload.clone(),
            author_did: self.author_did.clone(),
            req_id: self.req_id,
            signature: self.signature?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Receipt {
    pub seq_no: u64,
    pub txn_time: u64,
    #[serde(with = "b64_array")]
    pub root_hash: Digest,
}
