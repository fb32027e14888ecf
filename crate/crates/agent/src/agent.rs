use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use bdimhs_core::anoncreds::{
    self, CredentialDefinition, PresentationRequest, RevocationRegistry, Schema,
    VerificationResult, DEFAULT_MAX_CRED_NUM,
};
use bdimhs_core::crypto::{self, KeyPair, PublicKey, SealedEnvelope};
use bdimhs_core::encoding::{b64_decode, b64_encode};
use bdimhs_core::ledger::{
    Ledger, LedgerError, NymPayload, Receipt, Role, TxnKind, TxnRequest,
    DEFAULT_REPLAY_WINDOW_MS, REPLAY_WINDOW_KEY,
};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::authz::AuthzProvider;
use crate::error::AgentError;
use crate::events::{EventBus, Topic};
use crate::messages::Message;
use crate::puzzle;
use crate::records::{
    advance, Connection, ConnectionRole, ConnectionState, CredentialExchange,
    CredentialExchangeState, Invitation, PresentationExchange, PresentationExchangeState,
    Puzzle, StateMachine, StoredCredential,
};
use crate::transport::{Inbox, ReplayGuard, Transport};
use crate::wallet::{IssuerCredDef, Wallet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentConfig {
    pub label: String,
    /// Where peers deliver envelopes.
    pub endpoint: String,
    /// Seed of an already-registered public DID (the steward's).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public_seed: Option<String>,
    /// Bench mode only: accept credential offers without a holder decision.
    #[serde(default)]
    pub auto_accept_offers: bool,
    /// Bench mode only: answer proof requests revealing exactly the
    /// requested attributes.
    #[serde(default)]
    pub auto_accept_requests: bool,
}

impl AgentConfig {
    pub fn new(label: &str, endpoint: &str) -> Self {
        AgentConfig {
            label: label.to_owned(),
            endpoint: endpoint.to_owned(),
            public_seed: None,
            auto_accept_offers: false,
            auto_accept_requests: false,
        }
    }
}

/// Holder decision on a proof request.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProofDecision {
    pub accept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_id: Option<Uuid>,
    /// Defaults to the requested attributes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reveal_attrs: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevocationOutcome {
    pub cred_ex_id: Uuid,
    pub rev_reg_id: String,
    pub rev_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receipt: Option<Receipt>,
    /// Whether the holder acknowledged the notification.
    pub notified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisteredCredDef {
    pub cred_def_id: String,
    pub schema_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rev_reg_id: Option<String>,
}

/// Test hooks for fault injection.
#[derive(Debug, Default)]
pub struct Faults {
    /// Inviter returns a corrupted challenge in its connection response.
    pub corrupt_challenge: AtomicBool,
}

pub const INVITATION_QUERY: &str = "?oob=";

pub fn invitation_url(invitation: &Invitation) -> String {
    format!(
        "{}{INVITATION_QUERY}{}",
        invitation.service_endpoint,
        b64_encode(&serde_json::to_vec(invitation).expect("invitation serializes"))
    )
}

pub fn parse_invitation_url(url: &str) -> Result<Invitation, AgentError> {
    let (_, encoded) = url
        .split_once(INVITATION_QUERY)
        .ok_or_else(|| AgentError::InvalidRequest("invitation URL lacks ?oob=".into()))?;
    let bytes = b64_decode(encoded)
        .map_err(|_| AgentError::InvalidRequest("invitation is not base64url".into()))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| AgentError::InvalidRequest(format!("invitation JSON: {e}")))
}

pub struct Agent {
    config: AgentConfig,
    ledger: Arc<dyn Ledger>,
    transport: Arc<dyn Transport>,
    wallet: Mutex<Wallet>,
    events: EventBus,
    replay: Mutex<ReplayGuard>,
    window_ms: AtomicU64,
    auto_offers: AtomicBool,
    auto_requests: AtomicBool,
    enrollments: Mutex<HashMap<Uuid, Receipt>>,
    /// Serializes publication of registry deltas.
    revocation_lock: Mutex<()>,
    authz: RwLock<Option<Arc<AuthzProvider>>>,
    pub faults: Faults,
}

impl Agent {
    pub fn new(
        config: AgentConfig,
        ledger: Arc<dyn Ledger>,
        transport: Arc<dyn Transport>,
    ) -> Result<Arc<Agent>, AgentError> {
        Self::with_wallet(config.clone(), Wallet::new(&config.label), ledger, transport)
    }

    pub fn with_wallet(
        config: AgentConfig,
        mut wallet: Wallet,
        ledger: Arc<dyn Ledger>,
        transport: Arc<dyn Transport>,
    ) -> Result<Arc<Agent>, AgentError> {
        if let Some(seed) = &config.public_seed {
            let key = KeyPair::generate(Some(seed.as_bytes()))?;
            wallet.public_did = Some(key.did());
            wallet.insert_key(key);
        }
        Ok(Arc::new(Agent {
            auto_offers: AtomicBool::new(config.auto_accept_offers),
            auto_requests: AtomicBool::new(config.auto_accept_requests),
            config,
            ledger,
            transport,
            wallet: Mutex::new(wallet),
            events: EventBus::default(),
            replay: Mutex::new(ReplayGuard::default()),
            window_ms: AtomicU64::new(0),
            enrollments: Mutex::new(HashMap::new()),
            revocation_lock: Mutex::new(()),
            authz: RwLock::new(None),
            faults: Faults::default(),
        }))
    }

    pub fn label(&self) -> &str {
        &self.config.label
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    pub fn ledger(&self) -> &Arc<dyn Ledger> {
        &self.ledger
    }

    pub fn events(&self) -> &EventBus {
        &self.events
    }

    pub fn public_did(&self) -> Option<String> {
        self.wallet().public_did.clone()
    }

    pub fn set_auto_accept(&self, offers: bool, requests: bool) {
        self.auto_offers.store(offers, Ordering::SeqCst);
        self.auto_requests.store(requests, Ordering::SeqCst);
    }

    pub fn set_authz(&self, provider: AuthzProvider) {
        *self.authz.write().unwrap() = Some(Arc::new(provider));
    }

    pub fn authz(&self) -> Option<Arc<AuthzProvider>> {
        self.authz.read().unwrap().clone()
    }

    fn wallet(&self) -> MutexGuard<'_, Wallet> {
        self.wallet.lock().unwrap()
    }

    pub fn wallet_snapshot(&self) -> Wallet {
        self.wallet().clone()
    }

    pub fn export_wallet(&self, passphrase: &str) -> Vec<u8> {
        self.wallet().export(passphrase)
    }

    pub fn replay_window_ms(&self) -> u64 {
        let cached = self.window_ms.load(Ordering::Relaxed);
        if cached != 0 {
            return cached;
        }
        match self.ledger.get_config(REPLAY_WINDOW_KEY) {
            Ok(v) => {
                let w = v.as_u64().unwrap_or(DEFAULT_REPLAY_WINDOW_MS);
                self.window_ms.store(w, Ordering::Relaxed);
                w
            }
            Err(LedgerError::NotFound(_)) => {
                self.window_ms.store(DEFAULT_REPLAY_WINDOW_MS, Ordering::Relaxed);
                DEFAULT_REPLAY_WINDOW_MS
            }
            // Ledger unreachable: use the default without caching it.
            Err(_) => DEFAULT_REPLAY_WINDOW_MS,
        }
    }

    // ---- record bookkeeping -------------------------------------------

    fn conn_state(&self, conn: &mut Connection, next: ConnectionState) -> Result<(), AgentError> {
        advance(&mut conn.state, &mut conn.history, next)?;
        self.events.emit(
            Topic::Connections,
            conn.conn_id,
            &next.name(),
            serde_json::to_value(&*conn).unwrap_or_default(),
        );
        Ok(())
    }

    fn cred_state(
        &self,
        ex: &mut CredentialExchange,
        next: CredentialExchangeState,
    ) -> Result<(), AgentError> {
        advance(&mut ex.state, &mut ex.history, next)?;
        self.events.emit(
            Topic::IssueCredential,
            ex.cred_ex_id,
            &next.name(),
            serde_json::to_value(&*ex).unwrap_or_default(),
        );
        Ok(())
    }

    fn pres_state(
        &self,
        ex: &mut PresentationExchange,
        next: PresentationExchangeState,
    ) -> Result<(), AgentError> {
        advance(&mut ex.state, &mut ex.history, next)?;
        self.events.emit(
            Topic::PresentProof,
            ex.pres_ex_id,
            &next.name(),
            serde_json::to_value(&*ex).unwrap_or_default(),
        );
        Ok(())
    }

    fn emit_created_conn(&self, conn: &Connection) {
        self.events.emit(
            Topic::Connections,
            conn.conn_id,
            &conn.state.name(),
            serde_json::to_value(conn).unwrap_or_default(),
        );
    }

    fn send(
        &self,
        from: &KeyPair,
        to: &PublicKey,
        endpoint: &str,
        message: &Message,
    ) -> Result<(), AgentError> {
        let body = serde_json::to_vec(message).expect("message serializes");
        let envelope = crypto::seal(from, to, &body);
        self.transport.send(endpoint, &envelope)
    }

    /// Our key, their key and endpoint for an ACTIVE connection.
    fn route(&self, conn_id: Uuid) -> Result<(KeyPair, PublicKey, String), AgentError> {
        let w = self.wallet();
        let conn = w
            .connections
            .get(&conn_id)
            .ok_or_else(|| AgentError::NotConnected(conn_id.to_string()))?;
        if !conn.is_active() {
            return Err(AgentError::NotConnected(format!(
                "{conn_id} is {}",
                conn.state.name()
            )));
        }
        route_of(&w, conn)
    }

    // ---- connections ---------------------------------------------------

    pub fn create_invitation(&self, puzzle_difficulty: Option<u8>) -> Result<(Connection, String), AgentError> {
        if let Some(d) = puzzle_difficulty {
            if d > puzzle::MAX_DIFFICULTY {
                return Err(AgentError::InvalidRequest(format!(
                    "puzzle difficulty {d} exceeds {}",
                    puzzle::MAX_DIFFICULTY
                )));
            }
        }
        let mut w = self.wallet();
        let key = w.create_key();
        let invitation = Invitation {
            label: self.config.label.clone(),
            recipient_key: key.public_key(),
            service_endpoint: self.config.endpoint.clone(),
            nonce: crypto::random_bytes(),
            puzzle: puzzle_difficulty.map(|difficulty| Puzzle {
                difficulty,
                challenge: crypto::random_bytes(),
            }),
        };
        let conn = Connection {
            conn_id: Uuid::new_v4(),
            role: ConnectionRole::Inviter,
            state: ConnectionState::Invited,
            history: vec![ConnectionState::Invited],
            my_did: None,
            my_verkey: None,
            their_did: None,
            their_verkey: None,
            their_endpoint: None,
            their_label: None,
            invitation: invitation.clone(),
            challenge: None,
        };
        w.connections.insert(conn.conn_id, conn.clone());
        self.emit_created_conn(&conn);
        Ok((conn, invitation_url(&invitation)))
    }

    /// Accepts or rejects an invitation. On accept the full handshake runs
    /// before this returns, leaving both sides ACTIVE.
    pub fn receive_invitation(&self, invitation: &Invitation, accept: bool) -> Result<Connection, AgentError> {
        let conn_id = Uuid::new_v4();
        let mut conn = Connection {
            conn_id,
            role: ConnectionRole::Invitee,
            state: ConnectionState::Invited,
            history: vec![ConnectionState::Invited],
            my_did: None,
            my_verkey: None,
            their_did: None,
            their_verkey: Some(invitation.recipient_key),
            their_endpoint: Some(invitation.service_endpoint.clone()),
            their_label: Some(invitation.label.clone()),
            invitation: invitation.clone(),
            challenge: None,
        };
        self.emit_created_conn(&conn);
        if !accept {
            self.conn_state(&mut conn, ConnectionState::Abandoned)?;
            self.wallet().connections.insert(conn_id, conn.clone());
            return Ok(conn);
        }

        let puzzle_solution = invitation
            .puzzle
            .as_ref()
            .map(|p| puzzle::solve(&p.challenge, &invitation.nonce, p.difficulty));
        let challenge: crypto::Nonce = crypto::random_bytes();
        let key = {
            let mut w = self.wallet();
            let key = w.create_key();
            conn.my_did = Some(key.did());
            conn.my_verkey = Some(key.public_key());
            conn.challenge = Some(challenge);
            self.conn_state(&mut conn, ConnectionState::Requested)?;
            w.connections.insert(conn_id, conn);
            key
        };
        let request = Message::ConnectionRequest {
            invitation_nonce: invitation.nonce,
            label: self.config.label.clone(),
            did: key.did(),
            verkey: key.public_key(),
            endpoint: self.config.endpoint.clone(),
            challenge,
            puzzle_solution,
        };
        let sent = self.send(&key, &invitation.recipient_key, &invitation.service_endpoint, &request);
        let mut w = self.wallet();
        let conn = w.connections.get_mut(&conn_id).expect("record exists");
        if let Err(err) = sent {
            if !conn.state.is_terminal() {
                self.conn_state(conn, ConnectionState::Abandoned)?;
            }
            return Err(err);
        }
        Ok(conn.clone())
    }

    pub fn receive_invitation_url(&self, url: &str, accept: bool) -> Result<Connection, AgentError> {
        self.receive_invitation(&parse_invitation_url(url)?, accept)
    }

    pub fn connections(&self) -> Vec<Connection> {
        self.wallet().connections.values().cloned().collect()
    }

    pub fn connection(&self, conn_id: Uuid) -> Result<Connection, AgentError> {
        self.wallet()
            .connections
            .get(&conn_id)
            .cloned()
            .ok_or_else(|| AgentError::NotFound(format!("connection {conn_id}")))
    }

    /// Our ACTIVE connection whose peer pairwise DID belongs to `other`.
    pub fn connection_with(&self, other: &Agent) -> Option<Uuid> {
        let theirs: BTreeSet<String> = other
            .connections()
            .into_iter()
            .filter(|c| c.is_active())
            .filter_map(|c| c.my_did)
            .collect();
        self.connections()
            .into_iter()
            .find(|c| c.is_active() && c.their_did.as_ref().is_some_and(|d| theirs.contains(d)))
            .map(|c| c.conn_id)
    }

    fn on_connection_request(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::ConnectionRequest {
            invitation_nonce,
            label,
            did,
            verkey,
            endpoint,
            challenge,
            puzzle_solution,
        } = msg
        else {
            unreachable!()
        };
        if verkey != env.sender_key || did != verkey.did() {
            return Err(AgentError::InvalidRequest("request DID does not match its sender key".into()));
        }
        let (key, conn_id) = {
            let mut w = self.wallet();
            let conn_id = w
                .connections
                .values()
                .find(|c| c.role == ConnectionRole::Inviter && c.invitation.recipient_key == env.recipient_key)
                .map(|c| c.conn_id)
                .ok_or_else(|| AgentError::NotFound("no invitation for this key".into()))?;
            let conn = &w.connections[&conn_id];
            if conn.invitation.nonce != invitation_nonce {
                return Err(AgentError::HandshakeFailure);
            }
            if conn.state != ConnectionState::Invited {
                return Err(AgentError::ReplayRejected("invitation nonce already used".into()));
            }
            if let Some(p) = &conn.invitation.puzzle {
                let solved = puzzle_solution
                    .is_some_and(|s| puzzle::check(&p.challenge, &invitation_nonce, p.difficulty, s));
                if !solved {
                    return Err(AgentError::PuzzleRejected);
                }
            }
            let key = w.create_key();
            let conn = w.connections.get_mut(&conn_id).expect("found above");
            conn.my_did = Some(key.did());
            conn.my_verkey = Some(key.public_key());
            conn.their_did = Some(did);
            conn.their_verkey = Some(verkey);
            conn.their_endpoint = Some(endpoint.clone());
            conn.their_label = Some(label);
            let mut echo = challenge;
            if self.faults.corrupt_challenge.load(Ordering::SeqCst) {
                echo[0] ^= 0xff;
            }
            conn.challenge = Some(echo);
            self.conn_state(conn, ConnectionState::Requested)?;
            self.conn_state(conn, ConnectionState::Responded)?;
            (key, conn_id)
        };
        let response = Message::ConnectionResponse {
            label: self.config.label.clone(),
            did: key.did(),
            verkey: key.public_key(),
            endpoint: self.config.endpoint.clone(),
            challenge: self.wallet().connections[&conn_id].challenge.expect("set above"),
        };
        self.send(&key, &verkey, &endpoint, &response)
    }

    fn on_connection_response(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::ConnectionResponse {
            label,
            did,
            verkey,
            endpoint,
            challenge,
        } = msg
        else {
            unreachable!()
        };
        if verkey != env.sender_key || did != verkey.did() {
            return Err(AgentError::InvalidRequest("response DID does not match its sender key".into()));
        }
        let (key, ok) = {
            let mut w = self.wallet();
            let conn_id = w
                .connections
                .values()
                .find(|c| {
                    c.role == ConnectionRole::Invitee
                        && c.my_verkey == Some(env.recipient_key)
                        && c.state == ConnectionState::Requested
                })
                .map(|c| c.conn_id)
                .ok_or_else(|| AgentError::NotFound("no pending connection request".into()))?;
            let key = w
                .key(&env.recipient_key.did())
                .cloned()
                .ok_or_else(|| AgentError::NotFound("pairwise key".into()))?;
            let conn = w.connections.get_mut(&conn_id).expect("found above");
            conn.their_did = Some(did);
            conn.their_verkey = Some(verkey);
            conn.their_endpoint = Some(endpoint.clone());
            conn.their_label = Some(label);
            self.conn_state(conn, ConnectionState::Responded)?;
            let ok = conn.challenge == Some(challenge);
            self.conn_state(
                conn,
                if ok {
                    ConnectionState::Active
                } else {
                    ConnectionState::Abandoned
                },
            )?;
            (key, ok)
        };
        if ok {
            self.send(&key, &verkey, &endpoint, &Message::ConnectionAck)
        } else {
            let problem = Message::ConnectionProblem {
                reason: "challenge nonce mismatch".into(),
            };
            let _ = self.send(&key, &verkey, &endpoint, &problem);
            Err(AgentError::HandshakeFailure)
        }
    }

    fn on_connection_ack(&self, env: &SealedEnvelope) -> Result<(), AgentError> {
        let mut w = self.wallet();
        let conn = find_peer_mut(&mut w, env)?;
        if conn.role != ConnectionRole::Inviter {
            return Err(AgentError::InvalidRequest("unexpected connection ack".into()));
        }
        self.conn_state(conn, ConnectionState::Active)
    }

    fn on_connection_problem(&self, env: &SealedEnvelope) -> Result<(), AgentError> {
        let mut w = self.wallet();
        let conn = find_peer_mut(&mut w, env)?;
        if !conn.state.is_terminal() {
            self.conn_state(conn, ConnectionState::Abandoned)?;
        }
        Ok(())
    }

    // ---- enrollment ----------------------------------------------------

    /// Asks the steward at the other end of `conn_id` to write a fresh
    /// public DID for us with `role`. Returns the new DID and the receipt.
    pub fn request_enrollment(&self, conn_id: Uuid, role: Role) -> Result<(String, Receipt), AgentError> {
        let (from, to, endpoint) = self.route(conn_id)?;
        let verinym = KeyPair::random();
        let request_id = Uuid::new_v4();
        let msg = Message::EnrollRequest {
            request_id,
            did: verinym.did(),
            verkey: verinym.public_key(),
            role,
        };
        self.send(&from, &to, &endpoint, &msg)?;
        let receipt = self
            .enrollments
            .lock()
            .unwrap()
            .remove(&request_id)
            .ok_or_else(|| AgentError::Transport("steward sent no enrollment result".into()))?;
        let did = verinym.did();
        let mut w = self.wallet();
        w.insert_key(verinym);
        w.public_did = Some(did.clone());
        Ok((did, receipt))
    }

    fn on_enroll_request(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::EnrollRequest {
            request_id,
            did,
            verkey,
            role,
        } = msg
        else {
            unreachable!()
        };
        let (route, steward) = {
            let w = self.wallet();
            let conn = find_active_peer(&w, env)?;
            let steward = w
                .public_key()
                .cloned()
                .ok_or_else(|| AgentError::Unauthorized("agent holds no public DID".into()))?;
            (route_of(&w, conn)?, steward)
        };
        let payload = NymPayload {
            dest: did,
            verkey,
            role: Some(role),
        };
        let receipt = self
            .ledger
            .submit(TxnRequest::new(TxnKind::Nym, &payload, &steward.did(), &steward))?;
        let (from, to, endpoint) = route;
        self.send(&from, &to, &endpoint, &Message::EnrollResult { request_id, receipt })
    }

    fn on_enroll_result(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::EnrollResult { request_id, receipt } = msg else {
            unreachable!()
        };
        find_active_peer(&self.wallet(), env)?;
        self.enrollments.lock().unwrap().insert(request_id, receipt);
        Ok(())
    }

    // ---- ledger registration -------------------------------------------

    fn public_signer(&self) -> Result<KeyPair, AgentError> {
        self.wallet()
            .public_key()
            .cloned()
            .ok_or_else(|| AgentError::Unauthorized("agent holds no public DID".into()))
    }

    pub fn register_schema<S: AsRef<str>>(
        &self,
        name: &str,
        version: &str,
        attr_names: &[S],
    ) -> Result<(Schema, Receipt), AgentError> {
        let signer = self.public_signer()?;
        let schema = anoncreds::create_schema(&signer.did(), name, version, attr_names)?;
        let receipt = self
            .ledger
            .submit(TxnRequest::new(TxnKind::Schema, &schema, &signer.did(), &signer))?;
        Ok((schema, receipt))
    }

    pub fn register_cred_def(
        &self,
        schema_id: &str,
        tag: &str,
        support_revocation: bool,
        max_cred_num: Option<u64>,
    ) -> Result<RegisteredCredDef, AgentError> {
        let signer = self.public_signer()?;
        let record = self.ledger.get_schema_record(schema_id)?;
        let (definition, key) =
            anoncreds::create_cred_def(&signer.did(), &record.data, record.seq_no, tag, support_revocation);
        self.ledger
            .submit(TxnRequest::new(TxnKind::CredDef, &definition, &signer.did(), &signer))?;
        let registry = if support_revocation {
            let reg = RevocationRegistry::new(
                &signer.did(),
                &definition.cred_def_id,
                tag,
                max_cred_num.unwrap_or(DEFAULT_MAX_CRED_NUM),
            )?;
            self.ledger.submit(TxnRequest::new(
                TxnKind::RevRegDef,
                &reg.definition(),
                &signer.did(),
                &signer,
            ))?;
            Some(reg)
        } else {
            None
        };
        let registered = RegisteredCredDef {
            cred_def_id: definition.cred_def_id.clone(),
            schema_id: schema_id.to_owned(),
            rev_reg_id: registry.as_ref().map(|r| r.rev_reg_id.clone()),
        };
        self.wallet().cred_defs.insert(
            definition.cred_def_id.clone(),
            IssuerCredDef {
                definition,
                key,
                registry,
            },
        );
        Ok(registered)
    }

    pub fn issuer_cred_defs(&self) -> Vec<CredentialDefinition> {
        self.wallet().cred_defs.values().map(|c| c.definition.clone()).collect()
    }

    // ---- issuance ------------------------------------------------------

    pub fn send_offer(
        &self,
        conn_id: Uuid,
        cred_def_id: &str,
        values: &BTreeMap<String, String>,
    ) -> Result<CredentialExchange, AgentError> {
        let route = self.route(conn_id)?;
        let definition = self
            .wallet()
            .cred_defs
            .get(cred_def_id)
            .map(|c| c.definition.clone())
            .ok_or_else(|| AgentError::NotFound(format!("credential definition {cred_def_id}")))?;
        self.ledger.get_cred_def(cred_def_id)?;
        let schema = self.ledger.get_schema(&definition.schema_id)?;
        anoncreds::check_values(&schema, values)?;

        let cred_ex_id = Uuid::new_v4();
        let mut ex = CredentialExchange {
            cred_ex_id,
            conn_id,
            state: CredentialExchangeState::OfferSent,
            history: vec![CredentialExchangeState::OfferSent],
            cred_def_id: cred_def_id.to_owned(),
            schema_id: definition.schema_id.clone(),
            offer: values.clone(),
            holder_binding_key: None,
            rev_reg_id: None,
            rev_index: None,
            credential_id: None,
        };
        {
            let mut w = self.wallet();
            self.events.emit(
                Topic::IssueCredential,
                cred_ex_id,
                &ex.state.name(),
                serde_json::to_value(&ex).unwrap_or_default(),
            );
            w.credential_exchanges.insert(cred_ex_id, ex.clone());
        }
        let (from, to, endpoint) = route;
        let offer = Message::CredentialOffer {
            cred_ex_id,
            cred_def_id: cred_def_id.to_owned(),
            schema_id: definition.schema_id,
            attributes: values.clone(),
        };
        self.send(&from, &to, &endpoint, &offer)?;
        ex = self.credential_exchange(cred_ex_id)?;
        Ok(ex)
    }

    pub fn credential_exchange(&self, id: Uuid) -> Result<CredentialExchange, AgentError> {
        self.wallet()
            .credential_exchanges
            .get(&id)
            .cloned()
            .ok_or_else(|| AgentError::NotFound(format!("credential exchange {id}")))
    }

    pub fn credential_exchanges(&self) -> Vec<CredentialExchange> {
        self.wallet().credential_exchanges.values().cloned().collect()
    }

    fn on_credential_offer(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::CredentialOffer {
            cred_ex_id,
            cred_def_id,
            schema_id,
            attributes,
        } = msg
        else {
            unreachable!()
        };
        {
            let mut w = self.wallet();
            let conn_id = find_active_peer(&w, env)?.conn_id;
            if w.credential_exchanges.contains_key(&cred_ex_id) {
                return Err(AgentError::ReplayRejected(format!("offer {cred_ex_id} already received")));
            }
            let ex = CredentialExchange {
                cred_ex_id,
                conn_id,
                state: CredentialExchangeState::OfferReceived,
                history: vec![CredentialExchangeState::OfferReceived],
                cred_def_id,
                schema_id,
                offer: attributes,
                holder_binding_key: None,
                rev_reg_id: None,
                rev_index: None,
                credential_id: None,
            };
            self.events.emit(
                Topic::IssueCredential,
                cred_ex_id,
                &ex.state.name(),
                serde_json::to_value(&ex).unwrap_or_default(),
            );
            w.credential_exchanges.insert(cred_ex_id, ex);
        }
        if self.auto_offers.load(Ordering::SeqCst) {
            self.respond_offer(cred_ex_id, true)?;
        }
        Ok(())
    }

    /// Holder decision on a pending offer.
    pub fn respond_offer(&self, cred_ex_id: Uuid, accept: bool) -> Result<CredentialExchange, AgentError> {
        let (conn_id, msg) = {
            let mut w = self.wallet();
            let binding = accept.then(|| w.create_key());
            let ex = w
                .credential_exchanges
                .get_mut(&cred_ex_id)
                .ok_or_else(|| AgentError::NotFound(format!("credential exchange {cred_ex_id}")))?;
            if accept {
                let key = binding.expect("created above").public_key();
                self.cred_state(ex, CredentialExchangeState::RequestSent)?;
                ex.holder_binding_key = Some(key);
                (
                    ex.conn_id,
                    Message::CredentialRequest {
                        cred_ex_id,
                        holder_binding_key: key,
                    },
                )
            } else {
                self.cred_state(ex, CredentialExchangeState::Declined)?;
                (ex.conn_id, Message::CredentialDecline { cred_ex_id })
            }
        };
        let sent = self
            .route(conn_id)
            .and_then(|(from, to, endpoint)| self.send(&from, &to, &endpoint, &msg));
        // A decline is final locally even if the issuer cannot be told.
        if accept {
            sent?;
        }
        self.credential_exchange(cred_ex_id)
    }

    fn on_credential_request(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::CredentialRequest {
            cred_ex_id,
            holder_binding_key,
        } = msg
        else {
            unreachable!()
        };
        let schema_id = {
            let w = self.wallet();
            let conn_id = find_active_peer(&w, env)?.conn_id;
            let ex = exchange_on(&w.credential_exchanges, cred_ex_id, conn_id)?;
            ex.schema_id.clone()
        };
        let schema = self.ledger.get_schema(&schema_id)?;
        let (route, credential) = {
            let mut w = self.wallet();
            let conn = find_active_peer(&w, env)?.clone();
            let route = route_of(&w, &conn)?;
            let ex = w.credential_exchanges.get(&cred_ex_id).expect("checked above").clone();
            let issuer = w
                .cred_defs
                .get_mut(&ex.cred_def_id)
                .ok_or_else(|| AgentError::NotFound(format!("credential definition {}", ex.cred_def_id)))?;
            if ex.state != CredentialExchangeState::OfferSent {
                return Err(invalid(ex.state, CredentialExchangeState::RequestReceived));
            }
            let credential = anoncreds::issue(
                &issuer.definition,
                &issuer.key,
                &schema,
                issuer.registry.as_mut(),
                holder_binding_key,
                &ex.offer,
            )?;
            let ex = w.credential_exchanges.get_mut(&cred_ex_id).expect("checked above");
            self.cred_state(ex, CredentialExchangeState::RequestReceived)?;
            ex.holder_binding_key = Some(holder_binding_key);
            ex.rev_reg_id = credential.rev_reg_id.clone();
            ex.rev_index = credential.rev_index;
            self.cred_state(ex, CredentialExchangeState::CredentialIssued)?;
            (route, credential)
        };
        let (from, to, endpoint) = route;
        self.send(&from, &to, &endpoint, &Message::IssueCredential { cred_ex_id, credential })
    }

    fn on_credential_decline(&self, env: &SealedEnvelope, cred_ex_id: Uuid) -> Result<(), AgentError> {
        let mut w = self.wallet();
        let conn_id = find_active_peer(&w, env)?.conn_id;
        exchange_on(&w.credential_exchanges, cred_ex_id, conn_id)?;
        let ex = w.credential_exchanges.get_mut(&cred_ex_id).expect("checked");
        self.cred_state(ex, CredentialExchangeState::Declined)
    }

    fn on_issue_credential(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::IssueCredential {
            cred_ex_id,
            credential,
        } = msg
        else {
            unreachable!()
        };
        let ex = {
            let w = self.wallet();
            let conn_id = find_active_peer(&w, env)?.conn_id;
            exchange_on(&w.credential_exchanges, cred_ex_id, conn_id)?.clone()
        };
        if ex.state != CredentialExchangeState::RequestSent {
            return Err(invalid(ex.state, CredentialExchangeState::Stored));
        }
        let definition = self.ledger.get_cred_def(&credential.cred_def_id)?;
        let schema = self.ledger.get_schema(&definition.schema_id)?;
        if credential.cred_def_id != ex.cred_def_id
            || Some(credential.holder_binding_key) != ex.holder_binding_key
            || credential.values() != ex.offer
            || !credential.check(&definition, &schema)
        {
            return Err(AgentError::InvalidRequest("issued credential does not match the offer".into()));
        }
        let route = {
            let mut w = self.wallet();
            let conn = find_active_peer(&w, env)?.clone();
            let route = route_of(&w, &conn)?;
            let credential_id = Uuid::new_v4();
            let ex = w.credential_exchanges.get_mut(&cred_ex_id).expect("checked");
            self.cred_state(ex, CredentialExchangeState::Stored)?;
            ex.credential_id = Some(credential_id);
            ex.rev_reg_id = credential.rev_reg_id.clone();
            ex.rev_index = credential.rev_index;
            w.credentials.push(StoredCredential {
                credential_id,
                cred_ex_id,
                credential,
                revoked: false,
            });
            route
        };
        let (from, to, endpoint) = route;
        // The credential is stored either way; the ack only informs the issuer.
        if let Err(err) = self.send(&from, &to, &endpoint, &Message::CredentialAck { cred_ex_id }) {
            log::warn!("credential ack for {cred_ex_id} not delivered: {err}");
        }
        Ok(())
    }

    fn on_credential_ack(&self, env: &SealedEnvelope, cred_ex_id: Uuid) -> Result<(), AgentError> {
        let mut w = self.wallet();
        let conn_id = find_active_peer(&w, env)?.conn_id;
        exchange_on(&w.credential_exchanges, cred_ex_id, conn_id)?;
        let ex = w.credential_exchanges.get_mut(&cred_ex_id).expect("checked");
        self.cred_state(ex, CredentialExchangeState::Acked)
    }

    pub fn credentials(&self) -> Vec<StoredCredential> {
        self.wallet().credentials.clone()
    }

    // ---- presentation --------------------------------------------------

    pub fn send_proof_request(
        &self,
        conn_id: Uuid,
        cred_def_id: &str,
        requested_attrs: &[String],
        non_revoked_at_time: Option<u64>,
    ) -> Result<PresentationExchange, AgentError> {
        let (from, to, endpoint) = self.route(conn_id)?;
        if requested_attrs.is_empty() {
            return Err(AgentError::InvalidRequest("no attributes requested".into()));
        }
        let definition = self.ledger.get_cred_def(cred_def_id)?;
        let schema = self.ledger.get_schema(&definition.schema_id)?;
        if let Some(unknown) = requested_attrs.iter().find(|a| !schema.has_attr(a)) {
            return Err(AgentError::SchemaMismatch(format!("{unknown} is not in {}", schema.schema_id)));
        }
        let mut request = PresentationRequest::new(cred_def_id, requested_attrs);
        request.non_revoked_at_time = non_revoked_at_time;
        let pres_ex_id = Uuid::new_v4();
        let ex = PresentationExchange {
            pres_ex_id,
            conn_id,
            state: PresentationExchangeState::RequestSent,
            history: vec![PresentationExchangeState::RequestSent],
            request: request.clone(),
            presentation: None,
            result: None,
            revealed_attrs: BTreeSet::new(),
        };
        {
            let mut w = self.wallet();
            self.events.emit(
                Topic::PresentProof,
                pres_ex_id,
                &ex.state.name(),
                serde_json::to_value(&ex).unwrap_or_default(),
            );
            w.presentation_exchanges.insert(pres_ex_id, ex);
        }
        self.send(&from, &to, &endpoint, &Message::ProofRequest { pres_ex_id, request })?;
        self.presentation_exchange(pres_ex_id)
    }

    pub fn presentation_exchange(&self, id: Uuid) -> Result<PresentationExchange, AgentError> {
        self.wallet()
            .presentation_exchanges
            .get(&id)
            .cloned()
            .ok_or_else(|| AgentError::NotFound(format!("presentation exchange {id}")))
    }

    pub fn presentation_exchanges(&self) -> Vec<PresentationExchange> {
        self.wallet().presentation_exchanges.values().cloned().collect()
    }

    fn on_proof_request(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::ProofRequest { pres_ex_id, request } = msg else {
            unreachable!()
        };
        {
            let mut w = self.wallet();
            let conn_id = find_active_peer(&w, env)?.conn_id;
            if w.presentation_exchanges.contains_key(&pres_ex_id) {
                return Err(AgentError::ReplayRejected(format!("request {pres_ex_id} already received")));
            }
            let ex = PresentationExchange {
                pres_ex_id,
                conn_id,
                state: PresentationExchangeState::RequestReceived,
                history: vec![PresentationExchangeState::RequestReceived],
                request,
                presentation: None,
                result: None,
                revealed_attrs: BTreeSet::new(),
            };
            self.events.emit(
                Topic::PresentProof,
                pres_ex_id,
                &ex.state.name(),
                serde_json::to_value(&ex).unwrap_or_default(),
            );
            w.presentation_exchanges.insert(pres_ex_id, ex);
        }
        if self.auto_requests.load(Ordering::SeqCst) {
            self.respond_proof_request(
                pres_ex_id,
                &ProofDecision {
                    accept: true,
                    ..Default::default()
                },
            )?;
        }
        Ok(())
    }

    /// Holder decision on a pending proof request.
    pub fn respond_proof_request(
        &self,
        pres_ex_id: Uuid,
        decision: &ProofDecision,
    ) -> Result<PresentationExchange, AgentError> {
        let ex = self.presentation_exchange(pres_ex_id)?;
        if ex.state != PresentationExchangeState::RequestReceived {
            return Err(invalid(
                ex.state,
                if decision.accept {
                    PresentationExchangeState::PresentationSent
                } else {
                    PresentationExchangeState::Declined
                },
            ));
        }
        if !decision.accept {
            {
                let mut w = self.wallet();
                let ex = w.presentation_exchanges.get_mut(&pres_ex_id).expect("exists");
                self.pres_state(ex, PresentationExchangeState::Declined)?;
            }
            let sent = self
                .route(ex.conn_id)
                .and_then(|(from, to, endpoint)| self.send(&from, &to, &endpoint, &Message::ProofDecline { pres_ex_id }));
            if let Err(err) = sent {
                log::warn!("decline for {pres_ex_id} not delivered: {err}");
            }
            return self.presentation_exchange(pres_ex_id);
        }

        let reveal = decision
            .reveal_attrs
            .clone()
            .unwrap_or_else(|| ex.request.requested_attrs.clone());
        if !reveal.is_superset(&ex.request.requested_attrs) {
            return Err(AgentError::InvalidRequest("revealAttrs must include every requested attribute".into()));
        }
        let (stored, holder) = self.select_credential(&ex.request, decision.credential_id)?;
        let snapshot = match &stored.credential.rev_reg_id {
            Some(id) => Some(
                self.ledger
                    .accumulator_snapshot(id, ex.request.non_revoked_at_time)?,
            ),
            None => None,
        };
        let presentation = match anoncreds::present_with(
            &stored.credential,
            &ex.request,
            &reveal,
            &holder,
            snapshot.as_ref(),
            crypto::now_ms(),
        ) {
            Err(anoncreds::AnonCredsError::CredentialRevoked) => {
                self.mark_revoked(stored.credential_id);
                return Err(AgentError::CredentialRevoked);
            }
            other => other?,
        };
        let route = {
            let mut w = self.wallet();
            let conn = w
                .connections
                .get(&ex.conn_id)
                .filter(|c| c.is_active())
                .ok_or_else(|| AgentError::NotConnected(ex.conn_id.to_string()))?
                .clone();
            let route = route_of(&w, &conn)?;
            let ex = w.presentation_exchanges.get_mut(&pres_ex_id).expect("exists");
            self.pres_state(ex, PresentationExchangeState::PresentationSent)?;
            ex.presentation = Some(presentation.clone());
            ex.revealed_attrs = reveal;
            route
        };
        let (from, to, endpoint) = route;
        self.send(&from, &to, &endpoint, &Message::ProofPresentation { pres_ex_id, presentation })?;
        self.presentation_exchange(pres_ex_id)
    }

    fn select_credential(
        &self,
        request: &PresentationRequest,
        credential_id: Option<Uuid>,
    ) -> Result<(StoredCredential, KeyPair), AgentError> {
        let w = self.wallet();
        let candidates: Vec<&StoredCredential> = w
            .credentials
            .iter()
            .filter(|c| c.credential.cred_def_id == request.cred_def_id)
            .filter(|c| credential_id.is_none_or(|id| id == c.credential_id))
            .collect();
        let stored = match candidates.iter().find(|c| !c.revoked) {
            Some(c) => *c,
            None if candidates.is_empty() => return Err(AgentError::NoMatchingCredential),
            None => return Err(AgentError::CredentialRevoked),
        };
        let holder = w
            .key(&stored.credential.holder_binding_key.did())
            .cloned()
            .ok_or(AgentError::NotHolder)?;
        Ok((stored.clone(), holder))
    }

    fn on_proof_presentation(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::ProofPresentation {
            pres_ex_id,
            presentation,
        } = msg
        else {
            unreachable!()
        };
        let request = {
            let mut w = self.wallet();
            let conn_id = find_active_peer(&w, env)?.conn_id;
            exchange_on(&w.presentation_exchanges, pres_ex_id, conn_id)?;
            let ex = w.presentation_exchanges.get_mut(&pres_ex_id).expect("checked");
            self.pres_state(ex, PresentationExchangeState::PresentationReceived)?;
            ex.presentation = Some(presentation.clone());
            ex.request.clone()
        };
        let result = anoncreds::verify(&presentation, &request, self.ledger.as_ref(), crypto::now_ms());
        let mut w = self.wallet();
        let ex = w.presentation_exchanges.get_mut(&pres_ex_id).expect("checked");
        let next = if result.verified {
            PresentationExchangeState::VerifiedTrue
        } else {
            PresentationExchangeState::VerifiedFalse
        };
        ex.result = Some(result);
        self.pres_state(ex, next)
    }

    /// Checks a received presentation again against the ledger as it is
    /// now. Records and events are left untouched.
    pub fn reverify_presentation(&self, pres_ex_id: Uuid) -> Result<VerificationResult, AgentError> {
        let ex = self.presentation_exchange(pres_ex_id)?;
        let presentation = match (ex.state, ex.presentation) {
            (PresentationExchangeState::VerifiedTrue | PresentationExchangeState::VerifiedFalse, Some(p)) => p,
            (state, _) => {
                return Err(AgentError::InvalidRequest(format!(
                    "presentation exchange {pres_ex_id} is {} without a verified presentation",
                    state.name()
                )))
            }
        };
        Ok(anoncreds::verify(&presentation, &ex.request, self.ledger.as_ref(), crypto::now_ms()))
    }

    fn on_proof_decline(&self, env: &SealedEnvelope, pres_ex_id: Uuid) -> Result<(), AgentError> {
        let mut w = self.wallet();
        let conn_id = find_active_peer(&w, env)?.conn_id;
        exchange_on(&w.presentation_exchanges, pres_ex_id, conn_id)?;
        let ex = w.presentation_exchanges.get_mut(&pres_ex_id).expect("checked");
        self.pres_state(ex, PresentationExchangeState::Declined)
    }

    // ---- revocation ----------------------------------------------------

    /// Revokes the credential issued over `cred_ex_id`, optionally
    /// publishing the registry delta, and notifies the holder.
    pub fn revoke(&self, cred_ex_id: Uuid, publish: bool) -> Result<RevocationOutcome, AgentError> {
        let _serial = self.revocation_lock.lock().unwrap();
        let (ex, delta) = {
            let mut w = self.wallet();
            let ex = w
                .credential_exchanges
                .get(&cred_ex_id)
                .filter(|e| e.rev_index.is_some() && w.cred_defs.contains_key(&e.cred_def_id))
                .cloned()
                .ok_or_else(|| AgentError::NotFound(format!("revocable issued credential {cred_ex_id}")))?;
            let registry = w
                .cred_defs
                .get_mut(&ex.cred_def_id)
                .and_then(|c| c.registry.as_mut())
                .ok_or_else(|| AgentError::NotFound("revocation registry".into()))?;
            let delta = registry.revoke(ex.rev_index.expect("filtered"))?;
            (ex, delta)
        };
        let receipt = if publish {
            Some(self.publish_delta(&ex.cred_def_id, &delta)?)
        } else {
            None
        };
        let rev_reg_id = delta.rev_reg_id.clone();
        let rev_index = ex.rev_index.expect("filtered");
        let notified = self
            .route(ex.conn_id)
            .and_then(|(from, to, endpoint)| {
                self.send(
                    &from,
                    &to,
                    &endpoint,
                    &Message::RevocationNotification {
                        cred_ex_id,
                        rev_reg_id: rev_reg_id.clone(),
                        rev_index,
                    },
                )
            })
            .is_ok();
        Ok(RevocationOutcome {
            cred_ex_id,
            rev_reg_id,
            rev_index,
            receipt,
            notified,
        })
    }

    fn publish_delta(&self, cred_def_id: &str, delta: &anoncreds::RevRegDelta) -> Result<Receipt, AgentError> {
        let signer = self.public_signer()?;
        let receipt = self
            .ledger
            .submit(TxnRequest::new(TxnKind::RevRegEntry, delta, &signer.did(), &signer))?;
        if let Some(reg) = self
            .wallet()
            .cred_defs
            .get_mut(cred_def_id)
            .and_then(|c| c.registry.as_mut())
        {
            reg.clear_pending();
        }
        Ok(receipt)
    }

    /// Publishes revocations recorded with `publish = false`.
    pub fn publish_pending_revocations(&self, cred_def_id: &str) -> Result<Option<Receipt>, AgentError> {
        let _serial = self.revocation_lock.lock().unwrap();
        let delta = {
            let w = self.wallet();
            let reg = w
                .cred_defs
                .get(cred_def_id)
                .and_then(|c| c.registry.as_ref())
                .ok_or_else(|| AgentError::NotFound(format!("registry for {cred_def_id}")))?;
            if reg.pending.is_empty() {
                return Ok(None);
            }
            reg.delta()
        };
        self.publish_delta(cred_def_id, &delta).map(Some)
    }

    fn mark_revoked(&self, credential_id: Uuid) -> bool {
        let mut w = self.wallet();
        let Some(stored) = w.credentials.iter_mut().find(|c| c.credential_id == credential_id) else {
            return false;
        };
        if stored.revoked {
            return false;
        }
        stored.revoked = true;
        let payload = serde_json::json!({
            "credentialId": credential_id,
            "credExId": stored.cred_ex_id,
            "revRegId": stored.credential.rev_reg_id,
            "revIndex": stored.credential.rev_index,
        });
        self.events.emit(Topic::Revocation, credential_id, "REVOKED", payload);
        true
    }

    fn on_revocation_notification(&self, env: &SealedEnvelope, msg: Message) -> Result<(), AgentError> {
        let Message::RevocationNotification {
            cred_ex_id,
            rev_reg_id,
            rev_index,
        } = msg
        else {
            unreachable!()
        };
        let credential_id = {
            let w = self.wallet();
            let conn_id = find_active_peer(&w, env)?.conn_id;
            exchange_on(&w.credential_exchanges, cred_ex_id, conn_id)?;
            w.credentials
                .iter()
                .find(|c| {
                    c.cred_ex_id == cred_ex_id
                        && c.credential.rev_reg_id.as_deref() == Some(rev_reg_id.as_str())
                        && c.credential.rev_index == Some(rev_index)
                })
                .map(|c| c.credential_id)
                .ok_or_else(|| AgentError::NotFound(format!("credential from {cred_ex_id}")))?
        };
        self.mark_revoked(credential_id);
        Ok(())
    }

    /// Ledger-poll fallback for missed notifications. Returns the ids of
    /// credentials newly found revoked.
    pub fn refresh_revocation_status(&self) -> Result<Vec<Uuid>, AgentError> {
        let revocable: Vec<(Uuid, String, u64)> = self
            .wallet()
            .credentials
            .iter()
            .filter(|c| !c.revoked)
            .filter_map(|c| {
                Some((c.credential_id, c.credential.rev_reg_id.clone()?, c.credential.rev_index?))
            })
            .collect();
        let mut newly = Vec::new();
        for (id, rev_reg_id, index) in revocable {
            let state = self.ledger.get_rev_reg(&rev_reg_id, None)?;
            if state.revoked.contains(&index) && self.mark_revoked(id) {
                newly.push(id);
            }
        }
        Ok(newly)
    }

    // ---- inbound -------------------------------------------------------

    fn dispatch(&self, env: &SealedEnvelope, message: Message) -> Result<(), AgentError> {
        match message {
            m @ Message::ConnectionRequest { .. } => self.on_connection_request(env, m),
            m @ Message::ConnectionResponse { .. } => self.on_connection_response(env, m),
            Message::ConnectionAck => self.on_connection_ack(env),
            Message::ConnectionProblem { reason } => {
                log::info!("{}: connection problem from peer: {reason}", self.config.label);
                self.on_connection_problem(env)
            }
            m @ Message::EnrollRequest { .. } => self.on_enroll_request(env, m),
            m @ Message::EnrollResult { .. } => self.on_enroll_result(env, m),
            m @ Message::CredentialOffer { .. } => self.on_credential_offer(env, m),
            m @ Message::CredentialRequest { .. } => self.on_credential_request(env, m),
            Message::CredentialDecline { cred_ex_id } => self.on_credential_decline(env, cred_ex_id),
            m @ Message::IssueCredential { .. } => self.on_issue_credential(env, m),
            Message::CredentialAck { cred_ex_id } => self.on_credential_ack(env, cred_ex_id),
            m @ Message::ProofRequest { .. } => self.on_proof_request(env, m),
            m @ Message::ProofPresentation { .. } => self.on_proof_presentation(env, m),
            Message::ProofDecline { pres_ex_id } => self.on_proof_decline(env, pres_ex_id),
            m @ Message::RevocationNotification { .. } => self.on_revocation_notification(env, m),
        }
    }
}

impl Inbox for Agent {
    /// Authenticates, applies the replay guard, then processes.
    fn receive(&self, envelope: SealedEnvelope) -> Result<(), AgentError> {
        let key = self
            .wallet()
            .key(&envelope.recipient_key.did())
            .filter(|k| k.public_key() == envelope.recipient_key)
            .cloned()
            .ok_or_else(|| AgentError::NotFound("recipient key is not ours".into()))?;
        let plaintext = crypto::open(&key, &envelope)?;
        let window = self.replay_window_ms();
        self.replay.lock().unwrap().check_and_mark(
            &envelope.sender_key.0,
            &envelope.nonce,
            envelope.timestamp,
            crypto::now_ms(),
            window,
        )?;
        let message: Message = serde_json::from_slice(&plaintext)
            .map_err(|e| AgentError::InvalidRequest(format!("message body: {e}")))?;
        self.dispatch(&envelope, message)
    }
}

fn invalid<S: StateMachine>(from: S, to: S) -> AgentError {
    AgentError::InvalidTransition {
        record: S::RECORD.into(),
        from: from.name(),
        to: to.name(),
    }
}

fn route_of(w: &Wallet, conn: &Connection) -> Result<(KeyPair, PublicKey, String), AgentError> {
    let missing = || AgentError::NotConnected(conn.conn_id.to_string());
    let key = conn
        .my_did
        .as_deref()
        .and_then(|d| w.key(d))
        .cloned()
        .ok_or_else(missing)?;
    Ok((
        key,
        conn.their_verkey.ok_or_else(missing)?,
        conn.their_endpoint.clone().ok_or_else(missing)?,
    ))
}

fn find_peer_mut<'w>(w: &'w mut Wallet, env: &SealedEnvelope) -> Result<&'w mut Connection, AgentError> {
    w.connections
        .values_mut()
        .find(|c| c.my_verkey == Some(env.recipient_key) && c.their_verkey == Some(env.sender_key))
        .ok_or_else(|| AgentError::NotConnected("no connection for this key pair".into()))
}

fn find_active_peer<'w>(w: &'w Wallet, env: &SealedEnvelope) -> Result<&'w Connection, AgentError> {
    w.connections
        .values()
        .find(|c| c.my_verkey == Some(env.recipient_key) && c.their_verkey == Some(env.sender_key))
        .filter(|c| c.is_active())
        .ok_or_else(|| AgentError::NotConnected("no active connection for this key pair".into()))
}

trait HasConn {
    fn conn_id(&self) -> Uuid;
}

impl HasConn for CredentialExchange {
    fn conn_id(&self) -> Uuid {
        self.conn_id
    }
}

impl HasConn for PresentationExchange {
    fn conn_id(&self) -> Uuid {
        self.conn_id
    }
}

/// An exchange that exists and belongs to `conn_id`.
fn exchange_on<T: HasConn>(map: &BTreeMap<Uuid, T>, id: Uuid, conn_id: Uuid) -> Result<&T, AgentError> {
    map.get(&id)
        .filter(|e| e.conn_id() == conn_id)
        .ok_or_else(|| AgentError::NotFound(format!("exchange {id}")))
}

/// Connects `invitee` to `inviter` and returns (inviter conn, invitee conn).
pub fn connect(inviter: &Agent, invitee: &Agent) -> Result<(Uuid, Uuid), AgentError> {
    let (conn, url) = inviter.create_invitation(None)?;
    let theirs = invitee.receive_invitation_url(&url, true)?;
    Ok((conn.conn_id, theirs.conn_id))
}

/// The steward writes a fresh public DID for `target` with `role`, over
/// their existing ACTIVE connection.
pub fn enroll_with_role(steward: &Agent, target: &Agent, role: Role) -> Result<(String, Receipt), AgentError> {
    let conn_id = target
        .connection_with(steward)
        .ok_or_else(|| AgentError::NotConnected(format!("{} has no connection to {}", target.label(), steward.label())))?;
    target.request_enrollment(conn_id, role)
}
