//! Credential lifecycle: schemas, credential definitions, issuance,
//! selective-disclosure presentations and accumulator revocation.
//!
//! Selective disclosure uses salted hash commitments under a signed Merkle
//! root. This reveals exactly the requested subset but is not unlinkable:
//! the credential root is the same in every presentation of a credential.

mod credential;
mod presentation;
mod revocation;
mod schema;

use thiserror::Error;

use crate::crypto::CryptoError;

pub use credential::{
    check_values, holder_binding_leaf, issue, revocation_binding_leaf, AttributeValue, Credential,
};
pub use presentation::{
    present, present_with, presentation_digest, refresh_witness, verify, NonRevocationProof,
    Presentation, PresentationRequest, ReasonCode, RevealedAttribute, VerificationResult,
};
pub use revocation::{
    compute_accumulator, status_leaf, verify_witness, AccumulatorSnapshot, NonRevocationWitness,
    RevRegDelta, RevRegState, RevocationRegistry, RevocationRegistryDefinition,
    DEFAULT_MAX_CRED_NUM,
};
pub use schema::{
    create_cred_def, create_schema, cred_def_id, parse_cred_def_id, rev_reg_id, schema_id,
    CredDefIdParts, CredentialDefinition, Schema,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnonCredsError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("values do not match the schema: {0}")]
    SchemaMismatch(String),
    #[error("revocation registry is full")]
    RegistryFull,
    #[error("revocation index {0} was never issued")]
    NotIssued(u64),
    #[error("revocation index {0} is already revoked")]
    AlreadyRevoked(u64),
    #[error("credential has been revoked")]
    CredentialRevoked,
    #[error("key does not match the credential's holder binding")]
    NotHolder,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid revocation registry: {0}")]
    InvalidRegistry(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
