//! In-process validator pool.
//!
//! The lowest-numbered live node leads. It sequences each write, broadcasts
//! it to every validator over an in-memory bus and commits once `2f + 1`
//! signed acknowledgements are back. Stopping the leader hands the role to
//! the next live node, which first syncs from the most advanced live peer. Nodes can be stopped and messages dropped to
//! exercise the fault bounds.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde_json::Value;

use super::genesis::{node_keypair, GenesisConfig};
use super::state::LedgerState;
use super::txn::{NymRecord, Receipt, Transaction, TxnRequest};
use super::{LedgerError, LedgerReader, LedgerWriter};
use crate::anoncreds::{CredentialDefinition, RevRegState, RevocationRegistryDefinition};
use crate::crypto::{self, Digest, Domain, KeyPair, PublicKey, Signature};

/// Messages the leader sends to validators.
#[derive(Debug, Clone)]
pub enum BusMessage {
    PrePrepare(Transaction),
    Commit { seq_no: u64, txn_hash: Digest },
    Abort { seq_no: u64 },
    CatchUp(Vec<Transaction>),
}

#[derive(Debug, Clone)]
enum NodeReply {
    Ack { txn_hash: Digest, signature: Signature },
    Nack(LedgerError),
    Behind,
    Done,
}

type DropRule = Box<dyn Fn(usize, &BusMessage) -> bool + Send + Sync>;
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

struct Node {
    key: KeyPair,
    state: LedgerState,
    staged: Option<Transaction>,
}

fn ack_digest(txn_hash: &Digest) -> Digest {
    crypto::tagged_hash(Domain::NodeAck, &[txn_hash])
}

impl Node {
    fn handle(&mut self, msg: &BusMessage) -> NodeReply {
        match msg {
            BusMessage::PrePrepare(txn) => {
                let next = self.state.next_seq_no();
                if txn.seq_no > next {
                    return NodeReply::Behind;
                }
                if txn.seq_no < next || txn.prev_hash != self.state.tip_hash() {
                    return NodeReply::Nack(LedgerError::InvalidTransaction(
                        "sequence conflict".into(),
                    ));
                }
                let Some(request) = txn.request() else {
                    return NodeReply::Nack(LedgerError::InvalidSignature);
                };
                if let Err(e) = self.state.validate_request(&request) {
                    return NodeReply::Nack(e);
                }
                let txn_hash = txn.hash();
                self.staged = Some(txn.clone());
                NodeReply::Ack {
                    txn_hash,
                    signature: self.key.sign(&ack_digest(&txn_hash)),
                }
            }
            BusMessage::Commit { seq_no, txn_hash } => {
                match self.staged.take() {
                    Some(txn) if txn.seq_no == *seq_no && &txn.hash() == txn_hash => {
                        self.state.apply(&txn).expect("staged entry was validated");
                    }
                    other => self.staged = other,
                }
                NodeReply::Done
            }
            BusMessage::Abort { seq_no } => {
                if self.staged.as_ref().is_some_and(|t| t.seq_no == *seq_no) {
                    self.staged = None;
                }
                NodeReply::Done
            }
            BusMessage::CatchUp(entries) => {
                for txn in entries {
                    if txn.seq_no != self.state.next_seq_no() {
                        continue;
                    }
                    if txn.prev_hash != self.state.tip_hash() || self.state.apply(txn).is_err() {
                        break;
                    }
                }
                self.staged = None;
                NodeReply::Done
            }
        }
    }
}

pub struct LedgerPool {
    genesis: GenesisConfig,
    nodes: Vec<Mutex<Node>>,
    node_keys: Vec<PublicKey>,
    stopped: Vec<AtomicBool>,
    drop_rule: RwLock<Option<DropRule>>,
    sequencer: Mutex<()>,
    read_cursor: AtomicUsize,
    clock: Clock,
}

impl std::fmt::Debug for LedgerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LedgerPool")
            .field("nodes", &self.genesis.nodes.len())
            .field("live", &self.live_count())
            .finish_non_exhaustive()
    }
}

impl LedgerPool {
    pub fn bootstrap(genesis: GenesisConfig) -> Result<Self, LedgerError> {
        Self::bootstrap_with_clock(genesis, Arc::new(crypto::now_ms))
    }

    pub fn bootstrap_with_clock(genesis: GenesisConfig, clock: Clock) -> Result<Self, LedgerError> {
        genesis.validate()?;
        let genesis_txns = genesis.transactions();
        let mut initial = LedgerState::default();
        for txn in &genesis_txns {
            initial.apply(txn)?;
        }
        let mut nodes = Vec::new();
        let mut node_keys = Vec::new();
        for record in &genesis.nodes {
            let key = node_keypair(&record.alias);
            if key.public_key().verkey() != record.node_verkey {
                return Err(LedgerError::InvalidGenesis(format!(
                    "no local key for validator {}",
                    record.alias
                )));
            }
            node_keys.push(key.public_key());
            nodes.push(Mutex::new(Node {
                key,
                state: initial.clone(),
                staged: None,
            }));
        }
        Ok(LedgerPool {
            stopped: (0..nodes.len()).map(|_| AtomicBool::new(false)).collect(),
            genesis,
            nodes,
            node_keys,
            drop_rule: RwLock::new(None),
            sequencer: Mutex::new(()),
            read_cursor: AtomicUsize::new(0),
            clock,
        })
    }

    pub fn genesis(&self) -> &GenesisConfig {
        &self.genesis
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_faulty(&self) -> usize {
        self.genesis.max_faulty()
    }

    pub fn quorum(&self) -> usize {
        self.genesis.quorum()
    }

    pub fn stop_node(&self, index: usize) {
        self.stopped[index].store(true, Ordering::SeqCst);
    }

    /// Restarts a node and brings it level with the leader.
    pub fn start_node(&self, index: usize) {
        let _seq = self.sequencer.lock().unwrap();
        let source = self.most_advanced();
        self.stopped[index].store(false, Ordering::SeqCst);
        if let Some(source) = source {
            self.sync_from(source, index);
        }
    }

    /// Index of the current leader, if any node is live.
    pub fn leader(&self) -> Option<usize> {
        (0..self.nodes.len()).find(|&i| self.is_live(i))
    }

    /// Live node holding the longest log.
    fn most_advanced(&self) -> Option<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.is_live(i))
            .max_by_key(|&i| (self.node(i).state.audit.len(), std::cmp::Reverse(i)))
    }

    pub fn is_live(&self, index: usize) -> bool {
        !self.stopped[index].load(Ordering::SeqCst)
    }

    pub fn live_count(&self) -> usize {
        (0..self.nodes.len()).filter(|&i| self.is_live(i)).count()
    }

    /// Installs a predicate deciding which (recipient, message) deliveries
    /// are silently lost.
    pub fn set_drop_rule<F>(&self, rule: F)
    where
        F: Fn(usize, &BusMessage) -> bool + Send + Sync + 'static,
    {
        *self.drop_rule.write().unwrap() = Some(Box::new(rule));
    }

    pub fn clear_drop_rule(&self) {
        *self.drop_rule.write().unwrap() = None;
    }

    fn node(&self, index: usize) -> MutexGuard<'_, Node> {
        self.nodes[index].lock().unwrap()
    }

    fn deliver(&self, to: usize, msg: &BusMessage) -> Option<NodeReply> {
        if !self.is_live(to) {
            return None;
        }
        // The leader's messages to itself are local calls and never lost.
        if let Some(rule) = self.drop_rule.read().unwrap().as_ref() {
            if Some(to) != self.leader() && rule(to, msg) {
                return None;
            }
        }
        Some(self.node(to).handle(msg))
    }

    fn catch_up(&self, index: usize) {
        if let Some(leader) = self.leader() {
            self.sync_from(leader, index);
        }
    }

    fn sync_from(&self, source: usize, index: usize) {
        if index == source || !self.is_live(source) {
            return;
        }
        let have = self.node(index).state.audit.len();
        let missing: Vec<Transaction> = {
            let source = self.node(source);
            source.state.audit[have.min(source.state.audit.len())..].to_vec()
        };
        if !missing.is_empty() {
            self.deliver(index, &BusMessage::CatchUp(missing));
        }
    }

    pub fn submit(&self, request: TxnRequest) -> Result<Receipt, LedgerError> {
        let _seq = self.sequencer.lock().unwrap();
        let needed = self.quorum();
        let Some(leader_index) = self.leader() else {
            return Err(LedgerError::NoConsensus { acks: 0, needed });
        };
        if let Some(ahead) = self.most_advanced() {
            self.sync_from(ahead, leader_index);
        }
        let txn = {
            let leader = self.node(leader_index);
            let txn_time = (self.clock)().max(leader.state.last_txn_time() + 1);
            Transaction {
                seq_no: leader.state.next_seq_no(),
                txn_time,
                kind: request.kind,
                payload: request.payload,
                author_did: request.author_did,
                req_id: request.req_id,
                signature: Some(request.signature),
                prev_hash: leader.state.tip_hash(),
            }
        };
        let txn_hash = txn.hash();
        let pre_prepare = BusMessage::PrePrepare(txn.clone());

        let mut acked = Vec::new();
        for index in 0..self.nodes.len() {
            let mut reply = self.deliver(index, &pre_prepare);
            if let Some(NodeReply::Behind) = reply {
                self.catch_up(index);
                reply = self.deliver(index, &pre_prepare);
            }
            match reply {
                Some(NodeReply::Ack { txn_hash: h, signature })
                    if h == txn_hash
                        && crypto::verify(&self.node_keys[index], &ack_digest(&h), &signature) =>
                {
                    acked.push(index)
                }
                Some(NodeReply::Nack(err)) if index == leader_index => return Err(err),
                _ => {}
            }
        }

        if acked.len() < needed || !acked.contains(&leader_index) {
            let abort = BusMessage::Abort { seq_no: txn.seq_no };
            for index in 0..self.nodes.len() {
                self.deliver(index, &abort);
            }
            return Err(LedgerError::NoConsensus {
                acks: acked.len(),
                needed,
            });
        }

        let commit = BusMessage::Commit {
            seq_no: txn.seq_no,
            txn_hash,
        };
        for &index in &acked {
            self.deliver(index, &commit);
        }
        for index in 0..self.nodes.len() {
            if index != leader_index && !acked.contains(&index) {
                self.sync_from(leader_index, index);
            }
        }
        Ok(Receipt {
            seq_no: txn.seq_no,
            txn_time: txn.txn_time,
            root_hash: txn_hash,
        })
    }

    fn read_node(&self) -> Result<usize, LedgerError> {
        let n = self.nodes.len();
        let start = self.read_cursor.fetch_add(1, Ordering::Relaxed);
        (0..n)
            .map(|k| (start + k) % n)
            .find(|&i| self.is_live(i))
            .ok_or_else(|| LedgerError::Unavailable("no live validator".into()))
    }

    fn read<T>(&self, f: impl FnOnce(&LedgerState) -> Result<T, LedgerError>) -> Result<T, LedgerError> {
        let index = self.read_node()?;
        let node = self.node(index);
        f(&node.state)
    }

    /// Snapshot of one validator's state.
    pub fn node_state(&self, index: usize) -> LedgerState {
        self.node(index).state.clone()
    }

    /// The leader's log, or node 0's when every node is down.
    pub fn audit_log(&self) -> Vec<Transaction> {
        self.node(self.leader().unwrap_or(0)).state.audit.clone()
    }
}

impl LedgerWriter for LedgerPool {
    fn submit(&self, request: TxnRequest) -> Result<Receipt, LedgerError> {
        LedgerPool::submit(self, request)
    }
}

impl LedgerReader for LedgerPool {
    fn get_nym(&self, did: &str) -> Result<NymRecord, LedgerError> {
        self.read(|s| {
            s.domain
                .nyms
                .get(did)
                .cloned()
                .ok_or_else(|| LedgerError::NotFound(did.to_owned()))
        })
    }

    fn get_schema_record(&self, schema_id: &str) -> Result<super::SchemaRecord, LedgerError> {
        self.read(|s| {
            s.domain
                .schemas
                .get(schema_id)
                .cloned()
                .ok_or_else(|| LedgerError::NotFound(schema_id.to_owned()))
        })
    }

    fn get_cred_def(&self, cred_def_id: &str) -> Result<CredentialDefinition, LedgerError> {
        self.read(|s| {
            s.domain
                .cred_defs
                .get(cred_def_id)
                .map(|c| c.data.clone())
                .ok_or_else(|| LedgerError::NotFound(cred_def_id.to_owned()))
        })
    }

    fn get_rev_reg_def(&self, rev_reg_id: &str) -> Result<RevocationRegistryDefinition, LedgerError> {
        self.read(|s| {
            s.domain
                .rev_reg_defs
                .get(rev_reg_id)
                .map(|c| c.data.clone())
                .ok_or_else(|| LedgerError::NotFound(rev_reg_id.to_owned()))
        })
    }

    fn get_rev_reg(&self, rev_reg_id: &str, at: Option<u64>) -> Result<RevRegState, LedgerError> {
        self.read(|s| s.rev_reg_at(rev_reg_id, at))
    }

    fn get_config(&self, key: &str) -> Result<Value, LedgerError> {
        self.read(|s| {
            s.config
                .get(key)
                .cloned()
                .ok_or_else(|| LedgerError::NotFound(key.to_owned()))
        })
    }
}
