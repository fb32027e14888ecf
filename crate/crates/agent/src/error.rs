use bdimhs_core::anoncreds::AnonCredsError;
use bdimhs_core::crypto::CryptoError;
use bdimhs_core::ledger::LedgerError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wallet::WalletError;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentError {
    #[error("no active connection: {0}")]
    NotConnected(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("replay rejected: {0}")]
    ReplayRejected(String),
    #[error("handshake failed: peer did not return the challenge nonce")]
    HandshakeFailure,
    #[error("client puzzle solution rejected")]
    PuzzleRejected,
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("values do not match the schema: {0}")]
    SchemaMismatch(String),
    #[error("no stored credential matches the request")]
    NoMatchingCredential,
    #[error("credential has been revoked")]
    CredentialRevoked,
    #[error("key does not match the credential's holder binding")]
    NotHolder,
    #[error("{record} cannot move from {from} to {to}")]
    InvalidTransition {
        record: String,
        from: String,
        to: String,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("ledger: {0}")]
    Ledger(LedgerError),
    #[error("wallet: {0}")]
    Wallet(WalletError),
    #[error("target down: {0}")]
    TargetDown(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("could not open envelope")]
    AuthenticationFailure,
}

impl From<LedgerError> for AgentError {
    fn from(err: LedgerError) -> Self {
        match err {
            LedgerError::Unauthorized(m) => AgentError::Unauthorized(m),
            LedgerError::NotFound(m) => AgentError::NotFound(m),
            other => AgentError::Ledger(other),
        }
    }
}

impl From<AnonCredsError> for AgentError {
    fn from(err: AnonCredsError) -> Self {
        match err {
            AnonCredsError::SchemaMismatch(m) => AgentError::SchemaMismatch(m),
            AnonCredsError::CredentialRevoked => AgentError::CredentialRevoked,
            AnonCredsError::NotHolder => AgentError::NotHolder,
            other => AgentError::InvalidRequest(other.to_string()),
        }
    }
}

impl From<CryptoError> for AgentError {
    fn from(err: CryptoError) -> Self {
        match err {
            CryptoError::AuthenticationFailure => AgentError::AuthenticationFailure,
            other => AgentError::InvalidRequest(other.to_string()),
        }
    }
}

impl From<WalletError> for AgentError {
    fn from(err: WalletError) -> Self {
        AgentError::Wallet(err)
    }
}

impl AgentError {
    pub fn http_status(&self) -> u16 {
        match self {
            AgentError::NotFound(_) => 404,
            AgentError::Unauthorized(_) => 403,
            AgentError::ReplayRejected(_) => 409,
            AgentError::InvalidTransition { .. } => 409,
            AgentError::NotConnected(_) => 409,
            AgentError::InvalidRequest(_)
            | AgentError::SchemaMismatch(_)
            | AgentError::PuzzleRejected => 400,
            AgentError::TargetDown(_) | AgentError::Transport(_) => 502,
            AgentError::Ledger(LedgerError::Unavailable(_)) => 503,
            AgentError::Ledger(LedgerError::NoConsensus { .. }) => 503,
            _ => 422,
        }
    }
}
