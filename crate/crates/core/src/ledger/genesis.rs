//! Genesis files: a JSON-lines document with an optional header line
//! followed by one validator record per line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::txn::{NodeRecord, NymPayload, Role, Transaction, TxnKind};
use super::LedgerError;
use crate::crypto::{self, Domain, KeyPair, PublicKey, SIGNATURE_SCHEME_ID};

pub const REPLAY_WINDOW_KEY: &str = "replayWindowMs";
pub const DEFAULT_REPLAY_WINDOW_MS: u64 = 120_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisNym {
    pub did: String,
    /// Base58.
    pub verkey: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct GenesisHeader {
    signature_scheme: String,
    #[serde(default)]
    nyms: Vec<GenesisNym>,
    #[serde(default)]
    config: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenesisConfig {
    pub file_path: Option<PathBuf>,
    pub nodes: Vec<NodeRecord>,
    pub signature_scheme_id: String,
    pub nyms: Vec<GenesisNym>,
    pub config: BTreeMap<String, Value>,
}

/// Validator key for `alias` in the in-process pool.
pub fn node_keypair(alias: &str) -> KeyPair {
    KeyPair::from_seed(crypto::tagged_hash(Domain::NodeSeed, &[alias.as_bytes()]))
}

impl GenesisConfig {
    /// A local pool of `node_count` validators on consecutive ports, with
    /// `stewards` registered as genesis stewards.
    pub fn desk(node_count: usize, base_port: u16, stewards: &[PublicKey]) -> Self {
        let nodes = (0..node_count)
            .map(|i| {
                let alias = format!("Node{}", i + 1);
                NodeRecord {
                    node_verkey: node_keypair(&alias).public_key().verkey(),
                    alias,
                    endpoint: format!("127.0.0.1:{}", base_port as usize + i),
                    services: vec!["VALIDATOR".into()],
                }
            })
            .collect();
        let nyms = stewards
            .iter()
            .map(|key| GenesisNym {
                did: key.did(),
                verkey: key.verkey(),
                role: Role::Steward,
            })
            .collect();
        let mut config = BTreeMap::new();
        config.insert(REPLAY_WINDOW_KEY.to_owned(), Value::from(DEFAULT_REPLAY_WINDOW_MS));
        GenesisConfig {
            file_path: None,
            nodes,
            signature_scheme_id: SIGNATURE_SCHEME_ID.to_owned(),
            nyms,
            config,
        }
    }

    pub fn parse(text: &str) -> Result<Self, LedgerError> {
        let mut header: Option<GenesisHeader> = None;
        let mut nodes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(line).map_err(|e| {
                LedgerError::InvalidGenesis(format!("line {}: {e}", lineno + 1))
            })?;
            if value.get("alias").is_some() {
                nodes.push(serde_json::from_value(value).map_err(|e| {
                    LedgerError::InvalidGenesis(format!("line {}: {e}", lineno + 1))
                })?);
            } else if header.is_none() && nodes.is_empty() {
                header = Some(serde_json::from_value(value).map_err(|e| {
                    LedgerError::InvalidGenesis(format!("header: {e}"))
                })?);
            } else {
                return Err(LedgerError::InvalidGenesis(format!(
                    "line {}: expected a node record",
                    lineno + 1
                )));
            }
        }
        let header = header.unwrap_or(GenesisHeader {
            signature_scheme: SIGNATURE_SCHEME_ID.to_owned(),
            nyms: Vec::new(),
            config: BTreeMap::new(),
        });
        Ok(GenesisConfig {
            file_path: None,
            nodes,
            signature_scheme_id: header.signature_scheme,
            nyms: header.nyms,
            config: header.config,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LedgerError::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        config.file_path = Some(path.to_owned());
        Ok(config)
    }

    pub fn to_lines(&self) -> String {
        let header = GenesisHeader {
            signature_scheme: self.signature_scheme_id.clone(),
            nyms: self.nyms.clone(),
            config: self.config.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for node in &self.nodes {
            out.push_str(&serde_json::to_string(node).expect("node serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&mut self, path: &Path) -> Result<(), LedgerError> {
        std::fs::write(path, self.to_lines())
            .map_err(|e| LedgerError::Io(format!("{}: {e}", path.display())))?;
        self.file_path = Some(path.to_owned());
        Ok(())
    }

    /// Tolerated faults for this pool size.
    pub fn max_faulty(&self) -> usize {
        (self.nodes.len().saturating_sub(1)) / 3
    }

    pub fn quorum(&self) -> usize {
        2 * self.max_faulty() + 1
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        let n = self.nodes.len();
        if n < 4 {
            return Err(LedgerError::InsufficientNodes(n));
        }
        if (n - 1) % 3 != 0 {
            return Err(LedgerError::InvalidGenesis(format!(
                "{n} nodes is not of the form 3f+1"
            )));
        }
        if self.signature_scheme_id != SIGNATURE_SCHEME_ID {
            return Err(LedgerError::InvalidGenesis(format!(
                "unsupported signature scheme {}",
                self.signature_scheme_id
            )));
        }
        let mut aliases = BTreeSet::new();
        for node in &self.nodes {
            if !aliases.insert(node.alias.as_str()) {
                return Err(LedgerError::InvalidGenesis(format!(
                    "duplicate alias {}",
                    node.alias
                )));
            }
            PublicKey::from_verkey(&node.node_verkey).map_err(|_| {
                LedgerError::InvalidGenesis(format!("bad verkey for {}", node.alias))
            })?;
        }
        for nym in &self.nyms {
            let key = PublicKey::from_verkey(&nym.verkey)
                .map_err(|_| LedgerError::InvalidGenesis(format!("bad verkey for {}", nym.did)))?;
            if key.did() != nym.did {
                return Err(LedgerError::InvalidGenesis(format!(
                    "DID {} does not match its verkey",
                    nym.did
                )));
            }
        }
        Ok(())
    }

    /// Hash-chained genesis entries: NYMs, then NODEs, then CONFIG.
    pub fn transactions(&self) -> Vec<Transaction> {
        let mut entries: Vec<(TxnKind, Value, String)> = Vec::new();
        for nym in &self.nyms {
            let payload = NymPayload {
                dest: nym.did.clone(),
                verkey: PublicKey::from_verkey(&nym.verkey).expect("validated verkey"),
                role: Some(nym.role),
            };
            entries.push((TxnKind::Nym, serde_json::to_value(payload).unwrap(), nym.did.clone()));
        }
        for node in &self.nodes {
            entries.push((TxnKind::Node, serde_json::to_value(node).unwrap(), node.alias.clone()));
        }
        if !self.config.is_empty() {
            entries.push((
                TxnKind::Config,
                serde_json::to_value(&self.config).unwrap(),
                "genesis".to_owned(),
            ));
        }
        let mut prev_hash = [0u8; 32];
        entries
            .into_iter()
            .enumerate()
            .map(|(i, (kind, payload, author_did))| {
                let txn = Transaction {
                    seq_no: i as u64 + 1,
                    txn_time: 0,
                    kind,
                    payload,
                    author_did,
                    req_id: i as u64,
                    signature: None,
                    prev_hash,
                };
                prev_hash = txn.hash();
                txn
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steward() -> PublicKey {
        KeyPair::from_seed([1; 32]).public_key()
    }

    #[test]
    fn desk_genesis_round_trips_through_lines() {
        let g = GenesisConfig::desk(4, 9701, &[steward()]);
        g.validate().unwrap();
        let parsed = GenesisConfig::parse(&g.to_lines()).unwrap();
        assert_eq!(parsed, g);
        assert_eq!(g.max_faulty(), 1);
        assert_eq!(g.quorum(), 3);
    }

    #[test]
    fn node_lines_match_documented_shape() {
        let g = GenesisConfig::desk(4, 9701, &[]);
        let line = g.to_lines().lines().nth(1).unwrap().to_owned();
        let v: Value = serde_json::from_str(&line).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["alias", "endpoint", "nodeVerkey", "services"].map(String::from).into()
        );
        assert_eq!(v["services"], serde_json::json!(["VALIDATOR"]));
    }

    #[test]
    fn seven_nodes_tolerate_two() {
        let g = GenesisConfig::desk(7, 9701, &[]);
        g.validate().unwrap();
        assert_eq!(g.max_faulty(), 2);
        assert_eq!(g.quorum(), 5);
    }

    #[test]
    fn three_nodes_insufficient() {
        assert_eq!(
            GenesisConfig::desk(3, 9701, &[]).validate().unwrap_err(),
            LedgerError::InsufficientNodes(3)
        );
    }

    #[test]
    fn duplicate_alias_and_bad_size_rejected() {
        let mut g = GenesisConfig::desk(4, 9701, &[]);
        g.nodes[1].alias = g.nodes[0].alias.clone();
        assert!(matches!(g.validate(), Err(LedgerError::InvalidGenesis(_))));
        let g = GenesisConfig::desk(5, 9701, &[]);
        assert!(matches!(g.validate(), Err(LedgerError::InvalidGenesis(_))));
    }

    #[test]
    fn foreign_scheme_rejected() {
        let mut g = GenesisConfig::desk(4, 9701, &[]);
        g.signature_scheme_id = "secp256k1".into();
        assert!(matches!(g.validate(), Err(LedgerError::InvalidGenesis(_))));
    }

    #[test]
    fn genesis_chain_starts_from_zero() {
        let txns = GenesisConfig::desk(4, 9701, &[steward()]).transactions();
        assert_eq!(txns[0].prev_hash, [0u8; 32]);
        for pair in txns.windows(2) {
            assert_eq!(pair[1].prev_hash, pair[0].hash());
        }
        assert_eq!(txns.iter().filter(|t| t.kind == TxnKind::Node).count(), 4);
    }
}
