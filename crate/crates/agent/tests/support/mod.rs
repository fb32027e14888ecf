#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use bdimhs_agent::agent::{connect, enroll_with_role, Agent, AgentConfig, ProofDecision, RegisteredCredDef};
use bdimhs_agent::transport::{Inbox, LocalTransport};
use bdimhs_core::crypto::KeyPair;
use bdimhs_core::ledger::{GenesisConfig, LedgerPool, Role};
use uuid::Uuid;

pub const STEWARD_SEED: &str = "000000000000000000000000Steward1";

pub fn steward_key() -> KeyPair {
    KeyPair::generate(Some(STEWARD_SEED.as_bytes())).unwrap()
}

pub struct World {
    pub pool: Arc<LedgerPool>,
    pub transport: Arc<LocalTransport>,
    pub steward: Arc<Agent>,
}

impl World {
    pub fn new() -> Self {
        let genesis = GenesisConfig::desk(4, 9701, &[steward_key().public_key()]);
        let pool = Arc::new(LedgerPool::bootstrap(genesis).unwrap());
        let transport = LocalTransport::new();
        let mut config = AgentConfig::new("Steward", "local://steward");
        config.public_seed = Some(STEWARD_SEED.into());
        let steward = spawn_on(&pool, &transport, config);
        World {
            pool,
            transport,
            steward,
        }
    }

    pub fn spawn(&self, config: AgentConfig) -> Arc<Agent> {
        spawn_on(&self.pool, &self.transport, config)
    }

    pub fn agent(&self, label: &str) -> Arc<Agent> {
        self.spawn(AgentConfig::new(label, &format!("local://{}", label.to_lowercase())))
    }

    /// Connected to the steward and enrolled as ENDORSER.
    pub fn endorser(&self, label: &str) -> Arc<Agent> {
        let agent = self.agent(label);
        connect(&self.steward, &agent).unwrap();
        enroll_with_role(&self.steward, &agent, Role::Endorser).unwrap();
        agent
    }

    /// An endorser with the PID schema and a credential definition.
    pub fn pid_issuer(&self, label: &str, revocable: bool) -> (Arc<Agent>, RegisteredCredDef) {
        let issuer = self.endorser(label);
        let (schema, _) = issuer.register_schema("PID", "1.0", &pid_attrs()).unwrap();
        let cred_def = issuer
            .register_cred_def(&schema.schema_id, "default", revocable, Some(64))
            .unwrap();
        (issuer, cred_def)
    }
}

fn spawn_on(pool: &Arc<LedgerPool>, transport: &Arc<LocalTransport>, config: AgentConfig) -> Arc<Agent> {
    let endpoint = config.endpoint.clone();
    let agent = Agent::new(config, pool.clone(), transport.clone()).unwrap();
    transport.register(&endpoint, agent.clone() as Arc<dyn Inbox>);
    agent
}

pub fn pid_attrs() -> [&'static str; 5] {
    ["licenseNumber", "licenseExpiryDate", "designation", "medicalDiploma", "fullName"]
}

pub fn pid_values() -> BTreeMap<String, String> {
    [
        ("licenseNumber", "LIC-99812"),
        ("licenseExpiryDate", "2027-12-31"),
        ("designation", "physician"),
        ("medicalDiploma", "MBBS, University of Dhaka"),
        ("fullName", "Nadia Rahman"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

pub fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Runs offer → accept → issue → store, returning the shared credExId.
pub fn issue_pid(
    issuer: &Agent,
    holder: &Agent,
    cred_def_id: &str,
    values: &BTreeMap<String, String>,
) -> Uuid {
    let conn = issuer
        .connection_with(holder)
        .unwrap_or_else(|| connect(issuer, holder).unwrap().0);
    let ex = issuer.send_offer(conn, cred_def_id, values).unwrap();
    holder.respond_offer(ex.cred_ex_id, true).unwrap();
    ex.cred_ex_id
}

pub fn accept() -> ProofDecision {
    ProofDecision {
        accept: true,
        ..Default::default()
    }
}
