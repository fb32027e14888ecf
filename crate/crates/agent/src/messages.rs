//! Agent-to-agent message bodies carried inside sealed envelopes.

use std::collections::BTreeMap;

use bdimhs_core::anoncreds::{Credential, Presentation, PresentationRequest};
use bdimhs_core::crypto::{Nonce, PublicKey};
use bdimhs_core::encoding::b64_array;
use bdimhs_core::ledger::{Receipt, Role};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "@type", rename_all = "snake_case")]
pub enum Message {
    #[serde(rename_all = "camelCase")]
    ConnectionRequest {
        #[serde(with = "b64_array")]
        invitation_nonce: Nonce,
        label: String,
        did: String,
        verkey: PublicKey,
        endpoint: String,
        /// Fresh nonce the inviter must return.
        #[serde(with = "b64_array")]
        challenge: Nonce,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        puzzle_solution: Option<u64>,
    },
    #[serde(rename_all = "camelCase")]
    ConnectionResponse {
        label: String,
        did: String,
        verkey: PublicKey,
        endpoint: String,
        #[serde(with = "b64_array")]
        challenge: Nonce,
    },
    ConnectionAck,
    ConnectionProblem {
        reason: String,
    },
    #[serde(rename_all = "camelCase")]
    EnrollRequest {
        request_id: Uuid,
        did: String,
        verkey: PublicKey,
        role: Role,
    },
    #[serde(rename_all = "camelCase")]
    EnrollResult {
        request_id: Uuid,
        receipt: Receipt,
    },
    #[serde(rename_all = "camelCase")]
    CredentialOffer {
        cred_ex_id: Uuid,
        cred_def_id: String,
        schema_id: String,
        attributes: BTreeMap<String, String>,
    },
    #[serde(rename_all = "camelCase")]
    CredentialRequest {
        cred_ex_id: Uuid,
        holder_binding_key: PublicKey,
    },
    #[serde(rename_all = "camelCase")]
    CredentialDecline {
        cred_ex_id: Uuid,
    },
    #[serde(rename_all = "camelCase")]
    IssueCredential {
        cred_ex_id: Uuid,
        credential: Credential,
    },
    #[serde(rename_all = "camelCase")]
    CredentialAck {
        cred_ex_id: Uuid,
    },
    #[serde(rename_all = "camelCase")]
    ProofRequest {
        pres_ex_id: Uuid,
        request: PresentationRequest,
    },
    #[serde(rename_all = "camelCase")]
    ProofPresentation {
        pres_ex_id: Uuid,
        presentation: Presentation,
    },
    #[serde(rename_all = "camelCase")]
    ProofDecline {
        pres_ex_id: Uuid,
    },
    #[serde(rename_all = "camelCase")]
    RevocationNotification {
        cred_ex_id: Uuid,
        rev_reg_id: String,
        rev_index: u64,
    },
}
