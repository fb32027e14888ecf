//! Permissioned verifiable data registry: pool, config and domain
//! sub-ledgers folded from one hash-chained audit log, replicated over an
//! in-process validator pool with quorum commits and role-gated writes.

mod genesis;
mod pool;
mod state;
mod txn;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::anoncreds::{
    AccumulatorSnapshot, CredentialDefinition, RevRegState, RevocationRegistryDefinition, Schema,
};

pub use genesis::{
    node_keypair, GenesisConfig, GenesisNym, DEFAULT_REPLAY_WINDOW_MS, REPLAY_WINDOW_KEY,
};
pub use pool::{BusMessage, Clock, LedgerPool};
pub use state::{
    acl_permits, export_audit_lines, parse_audit_lines, replay, Committed, DomainState,
    LedgerState,
};
pub use txn::{
    request_signing_bytes, NodeRecord, NymPayload, NymRecord, Receipt, Role, Transaction,
    TxnKind, TxnRequest,
};

pub type SchemaRecord = Committed<Schema>;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LedgerError {
    #[error("pool needs at least 4 validators, genesis has {0}")]
    InsufficientNodes(usize),
    #[error("invalid genesis: {0}")]
    InvalidGenesis(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("signature does not verify under the author's verkey")]
    InvalidSignature,
    #[error("request was already submitted")]
    DuplicateRequest,
    #[error("no consensus: {acks} of {needed} required acknowledgements")]
    NoConsensus { acks: usize, needed: usize },
    #[error("invalid transaction: {0}")]
    InvalidTransaction(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("audit log corrupt at seqNo {0}")]
    CorruptLog(u64),
    #[error("ledger unavailable: {0}")]
    Unavailable(String),
    #[error("io: {0}")]
    Io(String),
}

/// Permissionless reads.
pub trait LedgerReader: Send + Sync {
    fn get_nym(&self, did: &str) -> Result<NymRecord, LedgerError>;
    fn get_schema_record(&self, schema_id: &str) -> Result<SchemaRecord, LedgerError>;
    fn get_cred_def(&self, cred_def_id: &str) -> Result<CredentialDefinition, LedgerError>;
    fn get_rev_reg_def(&self, rev_reg_id: &str)
        -> Result<RevocationRegistryDefinition, LedgerError>;
    /// Latest registry entry committed at or before `at` (default: now).
    fn get_rev_reg(&self, rev_reg_id: &str, at: Option<u64>) -> Result<RevRegState, LedgerError>;
    fn get_config(&self, key: &str) -> Result<Value, LedgerError>;

    fn get_schema(&self, schema_id: &str) -> Result<Schema, LedgerError> {
        self.get_schema_record(schema_id).map(|r| r.data)
    }

    fn replay_window_ms(&self) -> u64 {
        self.get_config(REPLAY_WINDOW_KEY)
            .ok()
            .and_then(|v| v.as_u64())
            .unwrap_or(DEFAULT_REPLAY_WINDOW_MS)
    }

    fn accumulator_snapshot(
        &self,
        rev_reg_id: &str,
        at: Option<u64>,
    ) -> Result<AccumulatorSnapshot, LedgerError> {
        Ok(AccumulatorSnapshot {
            definition: self.get_rev_reg_def(rev_reg_id)?,
            state: self.get_rev_reg(rev_reg_id, at)?,
        })
    }
}

pub trait LedgerWriter: Send + Sync {
    fn submit(&self, request: TxnRequest) -> Result<Receipt, LedgerError>;
}

/// Full client access to a ledger.
pub trait Ledger: LedgerReader + LedgerWriter {}

impl<T: LedgerReader + LedgerWriter> Ledger for T {}
