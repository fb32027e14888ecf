//! Selective-disclosure presentations and their verification.
//!
//! A presentation carries the value and salt of each revealed attribute
//! with a Merkle path to the signed credential root. Unrevealed attributes
//! contribute only the sibling digests that appear inside those paths.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::credential::{holder_binding_leaf, revocation_binding_leaf, Credential};
use super::revocation::{verify_witness, AccumulatorSnapshot, NonRevocationWitness};
use super::AnonCredsError;
use crate::crypto::{self, Digest, Domain, KeyPair, MerkleProof, Nonce, PublicKey, Salt, Signature};
use crate::encoding::b64_array;
use crate::ledger::{LedgerError, LedgerReader};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresentationRequest {
    #[serde(with = "b64_array")]
    pub nonce: Nonce,
    pub cred_def_id: String,
    pub requested_attrs: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_revoked_at_time: Option<u64>,
}

impl PresentationRequest {
    pub fn new<S: AsRef<str>>(cred_def_id: &str, requested_attrs: &[S]) -> Self {
        PresentationRequest {
            nonce: crypto::random_bytes(),
            cred_def_id: cred_def_id.to_owned(),
            requested_attrs: requested_attrs.iter().map(|a| a.as_ref().to_owned()).collect(),
            non_revoked_at_time: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevealedAttribute {
    pub value: String,
    #[serde(with = "b64_array")]
    pub salt: Salt,
    pub proof: MerkleProof,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NonRevocationProof {
    pub rev_reg_id: String,
    pub rev_index: u64,
    /// Path from the revocation binding leaf to the credential root.
    pub binding_proof: MerkleProof,
    pub witness: NonRevocationWitness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Presentation {
    pub cred_def_id: String,
    pub revealed: BTreeMap<String, RevealedAttribute>,
    #[serde(with = "b64_array")]
    pub credential_root: Digest,
    pub issuer_signature: Signature,
    pub holder_binding_key: PublicKey,
    pub holder_binding_proof: MerkleProof,
    pub holder_signature: Signature,
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_revocation_proof: Option<NonRevocationProof>,
}

/// Message the holder countersigns.
pub fn presentation_digest(root: &Digest, nonce: &Nonce, timestamp: u64) -> Digest {
    crypto::tagged_hash(
        Domain::PresentationBinding,
        &[root, nonce, &timestamp.to_be_bytes()],
    )
}

/// Refreshes the holder's non-revocation witness against a ledger read.
pub fn refresh_witness(
    credential: &Credential,
    snapshot: &AccumulatorSnapshot,
) -> Result<NonRevocationWitness, AnonCredsError> {
    let (Some(rev_reg_id), Some(rev_index)) = (&credential.rev_reg_id, credential.rev_index) else {
        return Err(AnonCredsError::InvalidRequest("credential is not revocable".into()));
    };
    if &snapshot.definition.rev_reg_id != rev_reg_id {
        return Err(AnonCredsError::InvalidRequest(format!(
            "snapshot is for {}, credential uses {rev_reg_id}",
            snapshot.definition.rev_reg_id
        )));
    }
    snapshot.witness(rev_index)
}

/// Presents exactly the requested attributes.
pub fn present(
    credential: &Credential,
    request: &PresentationRequest,
    holder: &KeyPair,
    snapshot: Option<&AccumulatorSnapshot>,
) -> Result<Presentation, AnonCredsError> {
    present_with(
        credential,
        request,
        &request.requested_attrs,
        holder,
        snapshot,
        crypto::now_ms(),
    )
}

/// Presents `reveal`, which must cover the requested attributes and may
/// add optional ones.
pub fn present_with(
    credential: &Credential,
    request: &PresentationRequest,
    reveal: &BTreeSet<String>,
    holder: &KeyPair,
    snapshot: Option<&AccumulatorSnapshot>,
    timestamp: u64,
) -> Result<Presentation, AnonCredsError> {
    if holder.public_key() != credential.holder_binding_key {
        return Err(AnonCredsError::NotHolder);
    }
    if request.cred_def_id != credential.cred_def_id {
        return Err(AnonCredsError::InvalidRequest(format!(
            "request is for {}, credential is {}",
            request.cred_def_id, credential.cred_def_id
        )));
    }
    if request.requested_attrs.is_empty() {
        return Err(AnonCredsError::InvalidRequest("no attributes requested".into()));
    }
    if let Some(missing) = request.requested_attrs.iter().find(|a| !reveal.contains(*a)) {
        return Err(AnonCredsError::InvalidRequest(format!(
            "requested attribute {missing} is not revealed"
        )));
    }
    if let Some(unknown) = reveal.iter().find(|a| !credential.attributes.contains_key(*a)) {
        return Err(AnonCredsError::InvalidRequest(format!(
            "credential has no attribute {unknown}"
        )));
    }

    let non_revocation_proof = match (&credential.rev_reg_id, credential.rev_index) {
        (Some(rev_reg_id), Some(rev_index)) => {
            let snapshot = snapshot.ok_or_else(|| {
                AnonCredsError::InvalidRequest("revocable credential needs an accumulator".into())
            })?;
            let witness = refresh_witness(credential, snapshot)?;
            Some(NonRevocationProof {
                rev_reg_id: rev_reg_id.clone(),
                rev_index,
                binding_proof: credential.prove_leaf(credential.revocation_leaf_index()),
                witness,
            })
        }
        _ => None,
    };

    let leaves = credential.leaves();
    let revealed = credential
        .attributes
        .iter()
        .enumerate()
        .filter(|(_, (name, _))| reveal.contains(*name))
        .map(|(position, (name, attr))| {
            let proof = crypto::merkle_prove(&leaves, position).expect("attribute leaf exists");
            (
                name.clone(),
                RevealedAttribute {
                    value: attr.value.clone(),
                    salt: attr.salt,
                    proof,
                },
            )
        })
        .collect();

    let digest = presentation_digest(&credential.credential_root, &request.nonce, timestamp);
    Ok(Presentation {
        cred_def_id: credential.cred_def_id.clone(),
        revealed,
        credential_root: credential.credential_root,
        issuer_signature: credential.issuer_signature,
        holder_binding_key: credential.holder_binding_key,
        holder_binding_proof: credential.prove_leaf(credential.holder_leaf_index()),
        holder_signature: holder.sign(&digest),
        timestamp,
        non_revocation_proof,
    })
}

/// Machine-readable rejection reasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    CredDefMismatch,
    UnknownCredDef,
    UnknownSchema,
    LedgerUnavailable,
    IssuerSignatureInvalid,
    MissingAttribute,
    UnknownAttribute,
    CommitmentMismatch,
    HolderBindingInvalid,
    HolderSignatureInvalid,
    StalePresentation,
    MissingNonRevocationProof,
    UnexpectedNonRevocationProof,
    UnknownRevReg,
    RevocationBindingInvalid,
    Revoked,
    AccumulatorMismatch,
    NonRevocationProofInvalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationResult {
    pub verified: bool,
    pub disclosed: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ReasonCode>,
}

impl VerificationResult {
    fn reject(reason: ReasonCode) -> Self {
        VerificationResult {
            verified: false,
            disclosed: BTreeMap::new(),
            reason: Some(reason),
        }
    }
}

fn ledger_reason(err: LedgerError, missing: ReasonCode) -> ReasonCode {
    match err {
        LedgerError::NotFound(_) => missing,
        _ => ReasonCode::LedgerUnavailable,
    }
}

/// Verifies `presentation` against `request` using fresh ledger reads.
/// Never fails: every defect is reported as `verified = false` with a reason.
pub fn verify(
    presentation: &Presentation,
    request: &PresentationRequest,
    ledger: &dyn LedgerReader,
    now_ms: u64,
) -> VerificationResult {
    match check(presentation, request, ledger, now_ms) {
        Ok(()) => VerificationResult {
            verified: true,
            disclosed: presentation
                .revealed
                .iter()
                .map(|(k, v)| (k.clone(), v.value.clone()))
                .collect(),
            reason: None,
        },
        Err(reason) => VerificationResult::reject(reason),
    }
}

fn check(
    p: &Presentation,
    request: &PresentationRequest,
    ledger: &dyn LedgerReader,
    now_ms: u64,
) -> Result<(), ReasonCode> {
    use ReasonCode::*;

    if p.cred_def_id != request.cred_def_id {
        return Err(CredDefMismatch);
    }
    let cred_def = ledger
        .get_cred_def(&p.cred_def_id)
        .map_err(|e| ledger_reason(e, UnknownCredDef))?;
    let schema = ledger
        .get_schema(&cred_def.schema_id)
        .map_err(|e| ledger_reason(e, UnknownSchema))?;

    if !crypto::verify(&cred_def.issuer_public_key, &p.credential_root, &p.issuer_signature) {
        return Err(IssuerSignatureInvalid);
    }

    if request.requested_attrs.iter().any(|a| !p.revealed.contains_key(a)) {
        return Err(MissingAttribute);
    }
    let attr_count = schema.attr_names.len();
    for (name, attr) in &p.revealed {
        let position = schema.position_of(name).ok_or(UnknownAttribute)?;
        let leaf = crypto::commitment_digest(name, &attr.value, &attr.salt);
        if attr.proof.leaf_index != position as u64
            || !crypto::merkle_verify(&p.credential_root, &leaf, &attr.proof)
        {
            return Err(CommitmentMismatch);
        }
    }

    if p.holder_binding_proof.leaf_index != attr_count as u64
        || !crypto::merkle_verify(
            &p.credential_root,
            &holder_binding_leaf(&p.holder_binding_key),
            &p.holder_binding_proof,
        )
    {
        return Err(HolderBindingInvalid);
    }
    let digest = presentation_digest(&p.credential_root, &request.nonce, p.timestamp);
    if !crypto::verify(&p.holder_binding_key, &digest, &p.holder_signature) {
        return Err(HolderSignatureInvalid);
    }
    let window = ledger.replay_window_ms();
    if now_ms.abs_diff(p.timestamp) > window {
        return Err(StalePresentation);
    }

    match (&p.non_revocation_proof, cred_def.supports_revocation) {
        (None, false) => Ok(()),
        (Some(_), false) => Err(UnexpectedNonRevocationProof),
        (None, true) => Err(MissingNonRevocationProof),
        (Some(nrp), true) => {
            let binding = revocation_binding_leaf(Some(&nrp.rev_reg_id), Some(nrp.rev_index));
            if nrp.binding_proof.leaf_index != attr_count as u64 + 1
                || !crypto::merkle_verify(&p.credential_root, &binding, &nrp.binding_proof)
            {
                return Err(RevocationBindingInvalid);
            }
            let def = ledger
                .get_rev_reg_def(&nrp.rev_reg_id)
                .map_err(|e| ledger_reason(e, UnknownRevReg))?;
            if def.cred_def_id != cred_def.cred_def_id {
                return Err(UnknownRevReg);
            }
            let at = request.non_revoked_at_time.unwrap_or(now_ms);
            let state = ledger
                .get_rev_reg(&nrp.rev_reg_id, Some(at))
                .map_err(|e| ledger_reason(e, UnknownRevReg))?;
            if state.revoked.contains(&nrp.rev_index) {
                return Err(Revoked);
            }
            if state.accumulator != nrp.witness.accumulator
                || state.seq_no != nrp.witness.accumulator_seq_no
            {
                return Err(AccumulatorMismatch);
            }
            if nrp.witness.rev_index != nrp.rev_index || !verify_witness(&def.salt, &nrp.witness) {
                return Err(NonRevocationProofInvalid);
            }
            Ok(())
        }
    }
}
