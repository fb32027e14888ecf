//! Protocol records and their state machines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use bdimhs_core::anoncreds::{Presentation, PresentationRequest, VerificationResult};
use bdimhs_core::crypto::{Nonce, PublicKey};
use bdimhs_core::encoding::b64_array;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::AgentError;

/// A state enum with an explicit transition table.
pub trait StateMachine: Copy + Eq + fmt::Debug + Serialize + 'static {
    const RECORD: &'static str;
    const ALL: &'static [Self];

    fn allowed(self, next: Self) -> bool;

    fn is_terminal(self) -> bool {
        !Self::ALL.iter().any(|n| self.allowed(*n))
    }

    fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_else(|| format!("{self:?}"))
    }
}

/// Moves `state` to `next`, recording it, or refuses.
pub fn advance<S: StateMachine>(
    state: &mut S,
    history: &mut Vec<S>,
    next: S,
) -> Result<(), AgentError> {
    if !state.allowed(next) {
        return Err(AgentError::InvalidTransition {
            record: S::RECORD.into(),
            from: state.name(),
            to: next.name(),
        });
    }
    *state = next;
    history.push(next);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConnectionState {
    Invited,
    Requested,
    Responded,
    Active,
    Abandoned,
}

impl StateMachine for ConnectionState {
    const RECORD: &'static str = "connection";
    const ALL: &'static [Self] = &[
        Self::Invited,
        Self::Requested,
        Self::Responded,
        Self::Active,
        Self::Abandoned,
    ];

    fn allowed(self, next: Self) -> bool {
        use ConnectionState::*;
        matches!(
            (self, next),
            (Invited, Requested)
                | (Requested, Responded)
                | (Responded, Active)
                | (Invited | Requested | Responded, Abandoned)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CredentialExchangeState {
    OfferSent,
    OfferReceived,
    RequestSent,
    RequestReceived,
    CredentialIssued,
    Stored,
    Acked,
    Declined,
}

impl StateMachine for CredentialExchangeState {
    const RECORD: &'static str = "credential exchange";
    const ALL: &'static [Self] = &[
        Self::OfferSent,
        Self::OfferReceived,
        Self::RequestSent,
        Self::RequestReceived,
        Self::CredentialIssued,
        Self::Stored,
        Self::Acked,
        Self::Declined,
    ];

    fn allowed(self, next: Self) -> bool {
        use CredentialExchangeState::*;
        matches!(
            (self, next),
            // issuer
            (OfferSent, RequestReceived)
                | (RequestReceived, CredentialIssued)
                | (CredentialIssued, Acked)
                | (OfferSent, Declined)
                // holder
                | (OfferReceived, RequestSent)
                | (RequestSent, Stored)
                | (OfferReceived, Declined)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PresentationExchangeState {
    RequestSent,
    RequestReceived,
    PresentationSent,
    PresentationReceived,
    VerifiedTrue,
    VerifiedFalse,
    Declined,
}

impl StateMachine for PresentationExchangeState {
    const RECORD: &'static str = "presentation exchange";
    const ALL: &'static [Self] = &[
        Self::RequestSent,
        Self::RequestReceived,
        Self::PresentationSent,
        Self::PresentationReceived,
        Self::VerifiedTrue,
        Self::VerifiedFalse,
        Self::Declined,
    ];

    fn allowed(self, next: Self) -> bool {
        use PresentationExchangeState::*;
        matches!(
            (self, next),
            // verifier
            (RequestSent, PresentationReceived)
                | (PresentationReceived, VerifiedTrue | VerifiedFalse)
                | (RequestSent, Declined)
                // prover
                | (RequestReceived, PresentationSent)
                | (RequestReceived, Declined)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectionRole {
    Inviter,
    Invitee,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Puzzle {
    pub difficulty: u8,
    #[serde(with = "b64_array")]
    pub challenge: [u8; 16],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Invitation {
    pub label: String,
    pub recipient_key: PublicKey,
    pub service_endpoint: String,
    #[serde(with = "b64_array")]
    pub nonce: Nonce,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub puzzle: Option<Puzzle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Connection {
    pub conn_id: Uuid,
    pub role: ConnectionRole,
    pub state: ConnectionState,
    pub history: Vec<ConnectionState>,
    /// Our pairwise DID; unset for an inviter until the request arrives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub my_did: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub my_verkey: Option<PublicKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub their_did: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub their_verkey: Option<PublicKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub their_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub their_label: Option<String>,
    pub invitation: Invitation,
    /// Challenge we sent (invitee) or echoed (inviter) during the handshake.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_nonce")]
    pub challenge: Option<Nonce>,
}

impl Connection {
    pub fn is_active(&self) -> bool {
        self.state == ConnectionState::Active
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CredentialExchange {
    pub cred_ex_id: Uuid,
    pub conn_id: Uuid,
    pub state: CredentialExchangeState,
    pub history: Vec<CredentialExchangeState>,
    pub cred_def_id: String,
    pub schema_id: String,
    /// Offered attribute values.
    pub offer: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_binding_key: Option<PublicKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rev_reg_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rev_index: Option<u64>,
    /// Holder side: id of the stored credential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_id: Option<Uuid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresentationExchange {
    pub pres_ex_id: Uuid,
    pub conn_id: Uuid,
    pub state: PresentationExchangeState,
    pub history: Vec<PresentationExchangeState>,
    pub request: PresentationRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation: Option<Presentation>,
    /// Set exactly when the state is VERIFIED_TRUE or VERIFIED_FALSE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<VerificationResult>,
    /// Prover side: attributes actually revealed.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub revealed_attrs: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoredCredential {
    pub credential_id: Uuid,
    pub cred_ex_id: Uuid,
    pub credential: bdimhs_core::anoncreds::Credential,
    pub revoked: bool,
}

mod opt_nonce {
    use bdimhs_core::crypto::Nonce;
    use bdimhs_core::encoding::{b64_decode, b64_encode};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Nonce>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_str(&b64_encode(n)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Nonce>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let bytes = b64_decode(&text).map_err(D::Error::custom)?;
        bytes
            .try_into()
            .map(Some)
            .map_err(|_| D::Error::custom("nonce must be 24 bytes"))
    }
}
