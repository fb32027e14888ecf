//! Ledger state as a fold over the audit log, plus write validation.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::txn::{NodeRecord, NymPayload, NymRecord, Role, Transaction, TxnKind, TxnRequest};
use super::LedgerError;
use crate::anoncreds::{
    self, compute_accumulator, CredentialDefinition, RevRegDelta, RevRegState,
    RevocationRegistryDefinition, Schema,
};
use crate::crypto::{self, Digest};
use crate::encoding::canonical_json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Committed<T> {
    pub seq_no: u64,
    pub txn_time: u64,
    pub data: T,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DomainState {
    pub nyms: BTreeMap<String, NymRecord>,
    pub schemas: BTreeMap<String, Committed<Schema>>,
    pub cred_defs: BTreeMap<String, Committed<CredentialDefinition>>,
    pub rev_reg_defs: BTreeMap<String, Committed<RevocationRegistryDefinition>>,
    /// Every published state of each registry, oldest first.
    pub rev_reg_entries: BTreeMap<String, Vec<RevRegState>>,
}

/// Pool, config and domain sub-ledgers plus the audit log they fold from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerState {
    pub pool: BTreeMap<String, NodeRecord>,
    pub config: BTreeMap<String, Value>,
    pub domain: DomainState,
    pub audit: Vec<Transaction>,
}

fn decode<T: DeserializeOwned>(payload: &Value) -> Result<T, LedgerError> {
    serde_json::from_value(payload.clone())
        .map_err(|e| LedgerError::InvalidTransaction(format!("malformed payload: {e}")))
}

fn invalid(msg: impl Into<String>) -> LedgerError {
    LedgerError::InvalidTransaction(msg.into())
}

/// Whether an author holding `author` may write `kind`. `assigns_role`
/// matters only for NYM.
pub fn acl_permits(author: Role, kind: TxnKind, assigns_role: bool) -> bool {
    match kind {
        TxnKind::Nym if assigns_role => matches!(author, Role::Trustee | Role::Steward),
        TxnKind::Nym => author >= Role::Endorser,
        TxnKind::Schema | TxnKind::CredDef | TxnKind::RevRegDef | TxnKind::RevRegEntry => {
            author >= Role::Endorser
        }
        TxnKind::Node | TxnKind::Config => matches!(author, Role::Trustee | Role::Steward),
    }
}

impl LedgerState {
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn tip_hash(&self) -> Digest {
        self.audit.last().map(Transaction::hash).unwrap_or([0; 32])
    }

    pub fn next_seq_no(&self) -> u64 {
        self.audit.len() as u64 + 1
    }

    pub fn last_txn_time(&self) -> u64 {
        self.audit.last().map(|t| t.txn_time).unwrap_or(0)
    }

    pub fn seq_hash_map(&self) -> BTreeMap<u64, Digest> {
        self.audit.iter().map(|t| (t.seq_no, t.hash())).collect()
    }

    fn has_request(&self, author: &str, req_id: u64) -> bool {
        self.audit
            .iter()
            .rev()
            .any(|t| !t.is_genesis() && t.req_id == req_id && t.author_did == author)
    }

    /// Full write check against this state: signature, duplicate, ACL, then
    /// kind-specific rules.
    pub fn validate_request(&self, req: &TxnRequest) -> Result<(), LedgerError> {
        let author = self
            .domain
            .nyms
            .get(&req.author_did)
            .ok_or_else(|| LedgerError::Unauthorized(format!("unknown author {}", req.author_did)))?;
        if !crypto::verify(&author.verkey, &req.signing_bytes(), &req.signature) {
            return Err(LedgerError::InvalidSignature);
        }
        if self.has_request(&req.author_did, req.req_id) {
            return Err(LedgerError::DuplicateRequest);
        }
        let assigns_role = req.kind == TxnKind::Nym && req.payload.get("role").is_some_and(|r| !r.is_null());
        if !acl_permits(author.role, req.kind, assigns_role) {
            return Err(LedgerError::Unauthorized(format!(
                "{:?} may not write {:?}{}",
                author.role,
                req.kind,
                if assigns_role { " with a role" } else { "" }
            )));
        }
        self.validate_payload(author, req)
    }

    fn validate_payload(&self, author: &NymRecord, req: &TxnRequest) -> Result<(), LedgerError> {
        let did = req.author_did.as_str();
        match req.kind {
            TxnKind::Nym => {
                let nym: NymPayload = decode(&req.payload)?;
                if nym.verkey.did() != nym.dest {
                    return Err(invalid("DID does not match its verkey"));
                }
                if self.domain.nyms.contains_key(&nym.dest)
                    && nym.dest != did
                    && author.role < Role::Steward
                {
                    return Err(LedgerError::Unauthorized(
                        "only stewards may update another DID".into(),
                    ));
                }
                Ok(())
            }
            TxnKind::Schema => {
                let schema: Schema = decode(&req.payload)?;
                schema.validate().map_err(|e| invalid(e.to_string()))?;
                if schema.schema_id != anoncreds::schema_id(did, &schema.name, &schema.version) {
                    return Err(invalid("schema id does not match author, name and version"));
                }
                if self.domain.schemas.contains_key(&schema.schema_id) {
                    return Err(invalid(format!("schema {} already exists", schema.schema_id)));
                }
                Ok(())
            }
            TxnKind::CredDef => {
                let def: CredentialDefinition = decode(&req.payload)?;
                if def.issuer_did != did {
                    return Err(invalid("credential definition issuer must be the author"));
                }
                let schema = self
                    .domain
                    .schemas
                    .get(&def.schema_id)
                    .ok_or_else(|| invalid(format!("schema {} not on ledger", def.schema_id)))?;
                if def.cred_def_id != anoncreds::cred_def_id(did, schema.seq_no, &def.tag) {
                    return Err(invalid("credential definition id is malformed"));
                }
                if self.domain.cred_defs.contains_key(&def.cred_def_id) {
                    return Err(invalid(format!("{} already exists", def.cred_def_id)));
                }
                Ok(())
            }
            TxnKind::RevRegDef => {
                let def: RevocationRegistryDefinition = decode(&req.payload)?;
                if def.issuer_did != did {
                    return Err(invalid("registry issuer must be the author"));
                }
                let cred_def = self
                    .domain
                    .cred_defs
                    .get(&def.cred_def_id)
                    .ok_or_else(|| invalid(format!("{} not on ledger", def.cred_def_id)))?;
                if cred_def.data.issuer_did != did || !cred_def.data.supports_revocation {
                    return Err(invalid("credential definition does not accept this registry"));
                }
                if def.rev_reg_id != anoncreds::rev_reg_id(did, &def.cred_def_id, &def.tag) {
                    return Err(invalid("revocation registry id is malformed"));
                }
                if self.domain.rev_reg_defs.contains_key(&def.rev_reg_id) {
                    return Err(invalid(format!("{} already exists", def.rev_reg_id)));
                }
                def.validate().map_err(|e| invalid(e.to_string()))
            }
            TxnKind::RevRegEntry => {
                let delta: RevRegDelta = decode(&req.payload)?;
                let def = self
                    .domain
                    .rev_reg_defs
                    .get(&delta.rev_reg_id)
                    .ok_or_else(|| invalid(format!("{} not on ledger", delta.rev_reg_id)))?;
                if def.data.issuer_did != did {
                    return Err(LedgerError::Unauthorized(
                        "only the registry issuer may publish entries".into(),
                    ));
                }
                let previous = self.domain.rev_reg_entries[&delta.rev_reg_id]
                    .last()
                    .expect("definition creates the first entry");
                if !previous.revoked.is_subset(&delta.revoked_indices)
                    || previous.revoked == delta.revoked_indices
                {
                    return Err(invalid("revoked set must strictly grow"));
                }
                if delta.revoked_indices.iter().any(|&i| i >= def.data.max_cred_num) {
                    return Err(invalid("revoked index beyond registry capacity"));
                }
                let expected =
                    compute_accumulator(&def.data.salt, def.data.max_cred_num, &delta.revoked_indices);
                if expected != delta.new_accumulator {
                    return Err(invalid("accumulator does not match the revoked set"));
                }
                Ok(())
            }
            TxnKind::Node => {
                let node: NodeRecord = decode(&req.payload)?;
                crypto::PublicKey::from_verkey(&node.node_verkey)
                    .map_err(|_| invalid("bad node verkey"))?;
                Ok(())
            }
            TxnKind::Config => {
                let _: BTreeMap<String, Value> = decode(&req.payload)?;
                Ok(())
            }
        }
    }

    /// Folds one sequenced entry into the state. Only decoding can fail.
    pub fn apply(&mut self, txn: &Transaction) -> Result<(), LedgerError> {
        let (seq_no, txn_time) = (txn.seq_no, txn.txn_time);
        match txn.kind {
            TxnKind::Nym => {
                let nym: NymPayload = decode(&txn.payload)?;
                let role = nym
                    .role
                    .or_else(|| self.domain.nyms.get(&nym.dest).map(|r| r.role))
                    .unwrap_or(Role::None);
                self.domain.nyms.insert(
                    nym.dest.clone(),
                    NymRecord {
                        did: nym.dest,
                        verkey: nym.verkey,
                        role,
                        added_by: txn.author_did.clone(),
                    },
                );
            }
            TxnKind::Schema => {
                let schema: Schema = decode(&txn.payload)?;
                self.domain.schemas.insert(
                    schema.schema_id.clone(),
                    Committed {
                        seq_no,
                        txn_time,
                        data: schema,
                    },
                );
            }
            TxnKind::CredDef => {
                let def: CredentialDefinition = decode(&txn.payload)?;
                self.domain.cred_defs.insert(
                    def.cred_def_id.clone(),
                    Committed {
                        seq_no,
                        txn_time,
                        data: def,
                    },
                );
            }
            TxnKind::RevRegDef => {
                let def: RevocationRegistryDefinition = decode(&txn.payload)?;
                self.domain.rev_reg_entries.insert(
                    def.rev_reg_id.clone(),
                    vec![RevRegState {
                        rev_reg_id: def.rev_reg_id.clone(),
                        seq_no,
                        txn_time,
                        accumulator: def.initial_accumulator,
                        revoked: BTreeSet::new(),
                    }],
                );
                self.domain.rev_reg_defs.insert(
                    def.rev_reg_id.clone(),
                    Committed {
                        seq_no,
                        txn_time,
                        data: def,
                    },
                );
            }
            TxnKind::RevRegEntry => {
                let delta: RevRegDelta = decode(&txn.payload)?;
                let entries = self
                    .domain
                    .rev_reg_entries
                    .get_mut(&delta.rev_reg_id)
                    .ok_or_else(|| invalid(format!("{} not on ledger", delta.rev_reg_id)))?;
                entries.push(RevRegState {
                    rev_reg_id: delta.rev_reg_id,
                    seq_no,
                    txn_time,
                    accumulator: delta.new_accumulator,
                    revoked: delta.revoked_indices,
                });
            }
            TxnKind::Node => {
                let node: NodeRecord = decode(&txn.payload)?;
                self.pool.insert(node.alias.clone(), node);
            }
            TxnKind::Config => {
                let params: BTreeMap<String, Value> = decode(&txn.payload)?;
                self.config.extend(params);
            }
        }
        self.audit.push(txn.clone());
        Ok(())
    }

    /// Registry state in force at `at` (the latest entry committed at or
    /// before it), or the newest entry when `at` is `None`.
    pub fn rev_reg_at(&self, rev_reg_id: &str, at: Option<u64>) -> Result<RevRegState, LedgerError> {
        let entries = self
            .domain
            .rev_reg_entries
            .get(rev_reg_id)
            .ok_or_else(|| LedgerError::NotFound(rev_reg_id.to_owned()))?;
        let found = match at {
            None => entries.last(),
            Some(at) => entries.iter().rev().find(|e| e.txn_time <= at),
        };
        found
            .cloned()
            .ok_or_else(|| LedgerError::NotFound(format!("{rev_reg_id} at {at:?}")))
    }
}

/// Rebuilds state from an exported audit log.
///
/// The hash chain is checked over the whole log before anything is folded,
/// so a modified entry is reported at the first link that no longer holds:
/// the entry after it, or the entry itself when its own `seqNo` or
/// `prevHash` was changed. With `trusted_tip`, a modified final entry is
/// reported at one past the end of the log.
pub fn replay(log: &[Transaction], trusted_tip: Option<&Digest>) -> Result<LedgerState, LedgerError> {
    let mut prev_hash = [0u8; 32];
    for (i, txn) in log.iter().enumerate() {
        let expected = i as u64 + 1;
        if txn.seq_no != expected || txn.prev_hash != prev_hash {
            return Err(LedgerError::CorruptLog(expected));
        }
        prev_hash = txn.hash();
    }
    if let Some(tip) = trusted_tip {
        if !log.is_empty() && &prev_hash != tip {
            return Err(LedgerError::CorruptLog(log.len() as u64 + 1));
        }
    }
    let mut state = LedgerState::default();
    for txn in log {
        state
            .apply(txn)
            .map_err(|_| LedgerError::CorruptLog(txn.seq_no))?;
    }
    Ok(state)
}

pub fn export_audit_lines(log: &[Transaction]) -> String {
    log.iter()
        .map(|t| serde_json::to_string(t).expect("transaction serializes") + "\n")
        .collect()
}

pub fn parse_audit_lines(text: &str) -> Result<Vec<Transaction>, LedgerError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|_| LedgerError::CorruptLog(i as u64 + 1))
        })
        .collect()
}
