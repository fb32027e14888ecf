//! Merkle-accumulator revocation registries.
//!
//! The accumulator is the Merkle root over one status leaf per registry
//! slot. A slot that was never issued counts as active. A non-revocation
//! witness is the Merkle path for the holder's slot; holders rebuild it from
//! the public revoked set whenever the accumulator moves.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AnonCredsError;
use crate::crypto::{self, Digest, Domain, MerkleProof, Salt};
use crate::encoding::b64_array;

pub const DEFAULT_MAX_CRED_NUM: u64 = 1024;

const STATUS_ACTIVE: u8 = 0x00;
const STATUS_REVOKED: u8 = 0x01;

pub fn status_leaf(salt: &Salt, index: u64, revoked: bool) -> Digest {
    let status = if revoked { STATUS_REVOKED } else { STATUS_ACTIVE };
    crypto::tagged_hash(
        Domain::RevocationLeaf,
        &[salt, &index.to_be_bytes(), &[status]],
    )
}

fn status_leaves(salt: &Salt, max_cred_num: u64, revoked: &BTreeSet<u64>) -> Vec<Digest> {
    (0..max_cred_num)
        .map(|i| status_leaf(salt, i, revoked.contains(&i)))
        .collect()
}

pub fn compute_accumulator(salt: &Salt, max_cred_num: u64, revoked: &BTreeSet<u64>) -> Digest {
    crypto::merkle_root(&status_leaves(salt, max_cred_num, revoked))
        .expect("registry capacity is at least one")
}

fn check_capacity(max_cred_num: u64) -> Result<(), AnonCredsError> {
    if max_cred_num == 0 || !max_cred_num.is_power_of_two() {
        return Err(AnonCredsError::InvalidRegistry(format!(
            "maxCredNum {max_cred_num} is not a power of two"
        )));
    }
    Ok(())
}

/// The public half of a registry, published once on the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevocationRegistryDefinition {
    pub rev_reg_id: String,
    pub cred_def_id: String,
    pub issuer_did: String,
    pub tag: String,
    pub max_cred_num: u64,
    #[serde(with = "b64_array")]
    pub salt: Salt,
    #[serde(with = "b64_array")]
    pub initial_accumulator: Digest,
}

impl RevocationRegistryDefinition {
    pub fn validate(&self) -> Result<(), AnonCredsError> {
        check_capacity(self.max_cred_num)?;
        if self.max_cred_num > (1 << 20) {
            return Err(AnonCredsError::InvalidRegistry("maxCredNum too large".into()));
        }
        if compute_accumulator(&self.salt, self.max_cred_num, &BTreeSet::new())
            != self.initial_accumulator
        {
            return Err(AnonCredsError::InvalidRegistry(
                "initial accumulator does not match an all-active registry".into(),
            ));
        }
        Ok(())
    }
}

/// Ledger entry recording the registry after a batch of revocations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevRegDelta {
    pub rev_reg_id: String,
    #[serde(with = "b64_array")]
    pub new_accumulator: Digest,
    pub revoked_indices: BTreeSet<u64>,
}

/// What a ledger read of a registry returns at some point in time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevRegState {
    pub rev_reg_id: String,
    pub seq_no: u64,
    pub txn_time: u64,
    #[serde(with = "b64_array")]
    pub accumulator: Digest,
    pub revoked: BTreeSet<u64>,
}

/// A registry state together with the definition needed to rebuild its
/// leaves; this is everything a holder needs to produce a witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulatorSnapshot {
    pub definition: RevocationRegistryDefinition,
    pub state: RevRegState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NonRevocationWitness {
    pub rev_index: u64,
    #[serde(with = "b64_array")]
    pub accumulator: Digest,
    pub accumulator_seq_no: u64,
    pub proof: MerkleProof,
}

impl AccumulatorSnapshot {
    /// Path for `rev_index` against the snapshot accumulator.
    pub fn witness(&self, rev_index: u64) -> Result<NonRevocationWitness, AnonCredsError> {
        if self.state.revoked.contains(&rev_index) {
            return Err(AnonCredsError::CredentialRevoked);
        }
        if rev_index >= self.definition.max_cred_num {
            return Err(AnonCredsError::NotIssued(rev_index));
        }
        let leaves = status_leaves(
            &self.definition.salt,
            self.definition.max_cred_num,
            &self.state.revoked,
        );
        let proof = crypto::merkle_prove(&leaves, rev_index as usize)?;
        Ok(NonRevocationWitness {
            rev_index,
            accumulator: self.state.accumulator,
            accumulator_seq_no: self.state.seq_no,
            proof,
        })
    }
}

/// Checks that `witness` shows an active status leaf at its index.
pub fn verify_witness(salt: &Salt, witness: &NonRevocationWitness) -> bool {
    witness.proof.leaf_index == witness.rev_index
        && crypto::merkle_verify(
            &witness.accumulator,
            &status_leaf(salt, witness.rev_index, false),
            &witness.proof,
        )
}

/// Issuer-side registry with private bookkeeping of issued slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevocationRegistry {
    pub rev_reg_id: String,
    pub cred_def_id: String,
    pub issuer_did: String,
    pub tag: String,
    pub max_cred_num: u64,
    #[serde(with = "b64_array")]
    pub accumulator: Digest,
    pub issued_indices: BTreeSet<u64>,
    pub revoked_indices: BTreeSet<u64>,
    /// Revoked but not yet published.
    pub pending: BTreeSet<u64>,
    #[serde(with = "b64_array")]
    pub salt: Salt,
}

impl RevocationRegistry {
    pub fn new(
        issuer_did: &str,
        cred_def_id: &str,
        tag: &str,
        max_cred_num: u64,
    ) -> Result<Self, AnonCredsError> {
        check_capacity(max_cred_num)?;
        let salt: Salt = crypto::random_bytes();
        Ok(RevocationRegistry {
            rev_reg_id: super::rev_reg_id(issuer_did, cred_def_id, tag),
            cred_def_id: cred_def_id.to_owned(),
            issuer_did: issuer_did.to_owned(),
            tag: tag.to_owned(),
            max_cred_num,
            accumulator: compute_accumulator(&salt, max_cred_num, &BTreeSet::new()),
            issued_indices: BTreeSet::new(),
            revoked_indices: BTreeSet::new(),
            pending: BTreeSet::new(),
            salt,
        })
    }

    pub fn definition(&self) -> RevocationRegistryDefinition {
        RevocationRegistryDefinition {
            rev_reg_id: self.rev_reg_id.clone(),
            cred_def_id: self.cred_def_id.clone(),
            issuer_did: self.issuer_did.clone(),
            tag: self.tag.clone(),
            max_cred_num: self.max_cred_num,
            salt: self.salt,
            initial_accumulator: compute_accumulator(&self.salt, self.max_cred_num, &BTreeSet::new()),
        }
    }

    /// Claims the lowest free slot.
    pub fn allocate_index(&mut self) -> Result<u64, AnonCredsError> {
        let index = (0..self.max_cred_num)
            .find(|i| !self.issued_indices.contains(i))
            .ok_or(AnonCredsError::RegistryFull)?;
        self.issued_indices.insert(index);
        Ok(index)
    }

    pub fn revoke(&mut self, rev_index: u64) -> Result<RevRegDelta, AnonCredsError> {
        if !self.issued_indices.contains(&rev_index) {
            return Err(AnonCredsError::NotIssued(rev_index));
        }
        if !self.revoked_indices.insert(rev_index) {
            return Err(AnonCredsError::AlreadyRevoked(rev_index));
        }
        self.pending.insert(rev_index);
        self.accumulator = compute_accumulator(&self.salt, self.max_cred_num, &self.revoked_indices);
        Ok(self.delta())
    }

    pub fn delta(&self) -> RevRegDelta {
        RevRegDelta {
            rev_reg_id: self.rev_reg_id.clone(),
            new_accumulator: self.accumulator,
            revoked_indices: self.revoked_indices.clone(),
        }
    }

    /// Called once the delta has been committed to the ledger.
    pub fn clear_pending(&mut self) {
        self.pending.clear();
    }

    pub fn witness(&self, rev_index: u64) -> Result<NonRevocationWitness, AnonCredsError> {
        if !self.issued_indices.contains(&rev_index) {
            return Err(AnonCredsError::NotIssued(rev_index));
        }
        AccumulatorSnapshot {
            definition: self.definition(),
            state: RevRegState {
                rev_reg_id: self.rev_reg_id.clone(),
                seq_no: 0,
                txn_time: 0,
                accumulator: self.accumulator,
                revoked: self.revoked_indices.clone(),
            },
        }
        .witness(rev_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry(max: u64) -> RevocationRegistry {
        RevocationRegistry::new("did", "did:3:CL:1:t", "r", max).unwrap()
    }

    #[test]
    fn capacity_must_be_power_of_two() {
        for bad in [0, 3, 6, 1000] {
            assert!(matches!(
                RevocationRegistry::new("d", "c", "t", bad),
                Err(AnonCredsError::InvalidRegistry(_))
            ));
        }
    }

    #[test]
    fn revoke_single_credential() {
        let mut reg = registry(1);
        let idx = reg.allocate_index().unwrap();
        assert_eq!(idx, 0);
        let before = reg.accumulator;
        let delta = reg.revoke(0).unwrap();
        assert_eq!(delta.revoked_indices, BTreeSet::from([0]));
        assert_ne!(delta.new_accumulator, before);
    }

    #[test]
    fn double_revoke_and_unknown_index() {
        let mut reg = registry(4);
        reg.allocate_index().unwrap();
        reg.revoke(0).unwrap();
        assert_eq!(reg.revoke(0).unwrap_err(), AnonCredsError::AlreadyRevoked(0));
        assert_eq!(reg.revoke(2).unwrap_err(), AnonCredsError::NotIssued(2));
    }

    #[test]
    fn registry_full_after_capacity() {
        let mut reg = registry(4);
        for i in 0..4 {
            assert_eq!(reg.allocate_index().unwrap(), i);
        }
        assert_eq!(reg.allocate_index().unwrap_err(), AnonCredsError::RegistryFull);
    }

    #[test]
    fn pending_cleared_after_publication() {
        let mut reg = registry(4);
        reg.allocate_index().unwrap();
        reg.revoke(0).unwrap();
        assert_eq!(reg.pending.len(), 1);
        reg.clear_pending();
        assert!(reg.pending.is_empty());
        assert_eq!(reg.revoked_indices.len(), 1);
    }

    #[test]
    fn definition_validates() {
        let reg = registry(8);
        reg.definition().validate().unwrap();
        let mut def = reg.definition();
        def.initial_accumulator[0] ^= 1;
        assert!(def.validate().is_err());
    }

    #[test]
    fn witnesses_track_revocations() {
        let mut reg = registry(8);
        for _ in 0..8 {
            reg.allocate_index().unwrap();
        }
        reg.revoke(5).unwrap();
        let w = reg.witness(2).unwrap();
        assert!(verify_witness(&reg.salt, &w));
        assert_eq!(reg.witness(5).unwrap_err(), AnonCredsError::CredentialRevoked);
        // A witness from before a revocation no longer reaches the new root.
        let old = reg.witness(3).unwrap();
        reg.revoke(6).unwrap();
        let mut stale = old.clone();
        stale.accumulator = reg.accumulator;
        assert!(!verify_witness(&reg.salt, &stale));
    }
}
