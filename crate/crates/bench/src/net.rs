//! A ledger pool and a set of HTTP agents in one process.

use std::collections::BTreeMap;
use std::sync::Arc;

use bdimhs_agent::admin::{spawn_http_agent, HttpAgent, HttpAgentOptions};
use bdimhs_agent::client::{connect, AdminClient};
use bdimhs_agent::ledger_http::{ledger_router, LedgerClient};
use bdimhs_agent::server::{self, ServerHandle};
use bdimhs_agent::AgentConfig;
use bdimhs_core::crypto::KeyPair;
use bdimhs_core::ledger::{GenesisConfig, Ledger, LedgerPool};

use crate::BenchError;

pub const STEWARD_SEED: &str = "000000000000000000000000Steward1";

pub const PID_ATTRS: [&str; 5] = [
    "licenseNumber",
    "licenseExpiryDate",
    "designation",
    "medicalDiploma",
    "fullName",
];

pub fn pid_values() -> BTreeMap<String, String> {
    [
        ("licenseNumber", "LIC-40117"),
        ("licenseExpiryDate", "2028-06-30"),
        ("designation", "physician"),
        ("medicalDiploma", "MBBS"),
        ("fullName", "Dr. Amal Perera"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

pub fn steward_key() -> KeyPair {
    KeyPair::generate(Some(STEWARD_SEED.as_bytes())).expect("32-byte seed")
}

pub struct LocalNet {
    pub pool: Arc<LedgerPool>,
    pub ledger: ServerHandle,
    pub steward: HttpAgent,
    agents: Vec<HttpAgent>,
}

impl LocalNet {
    /// Four-node desk pool with the default steward.
    pub fn start() -> Result<Self, BenchError> {
        let genesis = GenesisConfig::desk(4, 9701, &[steward_key().public_key()]);
        Self::with_pool(
            Arc::new(LedgerPool::bootstrap(genesis).map_err(|e| BenchError::Setup(e.to_string()))?),
            STEWARD_SEED,
        )
    }

    /// `steward_seed` must belong to a genesis steward of `pool`.
    pub fn with_pool(pool: Arc<LedgerPool>, steward_seed: &str) -> Result<Self, BenchError> {
        let listener = server::bind("127.0.0.1:0").map_err(|e| BenchError::Setup(e.to_string()))?;
        let ledger = server::spawn(listener, ledger_router(pool.clone())).map_err(|e| BenchError::Setup(e.to_string()))?;
        let mut config = AgentConfig::new("Steward", "");
        config.public_seed = Some(steward_seed.into());
        let steward = spawn_agent(&ledger.base_url(), config)?;
        Ok(LocalNet {
            pool,
            ledger,
            steward,
            agents: Vec::new(),
        })
    }

    pub fn ledger_url(&self) -> String {
        self.ledger.base_url()
    }

    pub fn spawn(&mut self, config: AgentConfig) -> Result<AdminClient, BenchError> {
        let agent = spawn_agent(&self.ledger_url(), config)?;
        let client = AdminClient::new(&agent.admin_url());
        self.agents.push(agent);
        Ok(client)
    }

    pub fn agent(&self, label: &str) -> Option<&HttpAgent> {
        self.agents.iter().find(|a| a.agent.label() == label)
    }

    pub fn steward_client(&self) -> AdminClient {
        AdminClient::new(&self.steward.admin_url())
    }

    /// Connects `agent` to the steward and has it enrolled as ENDORSER.
    pub fn endorse(&self, agent: &AdminClient) -> Result<String, BenchError> {
        let (_, conn) = connect(&self.steward_client(), agent).map_err(setup)?;
        let reply = agent.enroll(&conn, "ENDORSER").map_err(setup)?;
        Ok(reply["did"].as_str().unwrap_or_default().to_owned())
    }

    /// Spawns and wires the agents `run` drives.
    pub fn targets(&mut self) -> Result<Targets, BenchError> {
        let issuer = self.spawn(AgentConfig::new("Issuer", ""))?;
        self.endorse(&issuer)?;
        let holder = self.spawn(AgentConfig::new("Holder", ""))?;
        let recipient = self.spawn(AgentConfig::new("Recipient", ""))?;
        let verifier = self.spawn(AgentConfig::new("Verifier", ""))?;
        Targets::attach(issuer, holder, recipient, verifier)
    }
}

/// An HTTP agent on an ephemeral port, reading and writing the ledger
/// at `ledger_url`.
pub fn spawn_agent(ledger_url: &str, config: AgentConfig) -> Result<HttpAgent, BenchError> {
    let ledger = Arc::new(LedgerClient::new(ledger_url)) as Arc<dyn Ledger>;
    spawn_http_agent(config, None, ledger, HttpAgentOptions::default()).map_err(|e| BenchError::Setup(e.to_string()))
}

fn setup(e: impl std::fmt::Display) -> BenchError {
    BenchError::Setup(e.to_string())
}

/// Agents a load run talks to, all through their admin APIs.
#[derive(Clone)]
pub struct Targets {
    /// Endorser owning `cred_def_id`.
    pub issuer: AdminClient,
    /// Accepts offers and answers proof requests on its own.
    pub holder: AdminClient,
    /// Leaves proof requests pending.
    pub recipient: AdminClient,
    pub verifier: AdminClient,
    pub cred_def_id: String,
}

impl Targets {
    /// Prepares running agents: registers a bench credential definition
    /// on `issuer`, which must already be an endorser, and turns on
    /// auto-accept at `holder`.
    pub fn attach(
        issuer: AdminClient,
        holder: AdminClient,
        recipient: AdminClient,
        verifier: AdminClient,
    ) -> Result<Targets, BenchError> {
        for t in [&issuer, &holder, &recipient, &verifier] {
            t.status().map_err(|_| BenchError::TargetDown(t.base().to_owned()))?;
        }
        let name = format!("PID-bench-{}", &uuid::Uuid::new_v4().simple().to_string()[..8]);
        let schema_id = issuer.register_schema(&name, "1.0", &PID_ATTRS).map_err(setup)?;
        let cd = issuer.register_cred_def(&schema_id, false, None).map_err(setup)?;
        holder.set_auto_accept(true, true).map_err(setup)?;
        Ok(Targets {
            issuer,
            holder,
            recipient,
            verifier,
            cred_def_id: cd["credDefId"].as_str().unwrap_or_default().to_owned(),
        })
    }
}
