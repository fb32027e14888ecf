use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use bdimhs_core::crypto::KeyPair;
use bdimhs_core::ledger::{GenesisConfig, Role};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const PID_CRED_DEF_PLACEHOLDER: &str = "{{PID_CRED_DEF_ID}}";
pub const DEFAULT_STEWARD_SEED: &str = "000000000000000000000000Steward1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Steward,
    Issuer,
    Holder,
    Verifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentEntry {
    pub label: String,
    pub role: AgentRole,
    /// Host the agent binds and advertises.
    pub endpoint: String,
    pub port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

impl AgentEntry {
    pub fn admin_url(&self) -> String {
        format!("http://{}:{}", self.endpoint, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SchemaFixture {
    pub name: String,
    pub version: String,
    /// Label of the agent that registers it.
    pub issuer: String,
    pub attr_names: Vec<String>,
    #[serde(default)]
    pub sample_values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioConfig {
    pub genesis_path: PathBuf,
    #[serde(default = "default_ledger_port")]
    pub ledger_port: u16,
    #[serde(default = "default_seed")]
    pub steward_seed: String,
    pub agents: Vec<AgentEntry>,
    pub schemas: Vec<PathBuf>,
    pub authz_rules_path: PathBuf,
    /// Overrides `ledgerPort` when set, e.g. for a remote ledger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_url: Option<String>,
}

fn default_ledger_port() -> u16 {
    9700
}

fn default_seed() -> String {
    DEFAULT_STEWARD_SEED.into()
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

impl ScenarioConfig {
    /// Loads `path`, resolves relative paths against its directory and
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::load_with(path, |k| std::env::var(k).ok())
    }

    pub fn load_with(path: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path, e))?;
        let mut config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| config_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_owned() } else { base.join(p) };
        config.genesis_path = resolve(&config.genesis_path);
        config.authz_rules_path = resolve(&config.authz_rules_path);
        config.schemas = config.schemas.iter().map(|p| resolve(p)).collect();
        config.apply_env(env);
        config.validate()?;
        Ok(config)
    }

    /// GENESIS_PATH replaces the genesis file; AGENT_LABEL with
    /// AGENT_ENDPOINT moves that agent to another host.
    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) {
        if let Some(p) = env("GENESIS_PATH") {
            self.genesis_path = PathBuf::from(p);
        }
        if let Some(url) = env("LEDGER_URL") {
            self.ledger_url = Some(url);
        }
        if let (Some(label), Some(endpoint)) = (env("AGENT_LABEL"), env("AGENT_ENDPOINT")) {
            if let Some(a) = self.agents.iter_mut().find(|a| a.label == label) {
                a.endpoint = endpoint;
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let stewards = self.agents.iter().filter(|a| a.role == AgentRole::Steward).count();
        if stewards != 1 {
            return Err(CliError::Config(format!("expected exactly one steward, found {stewards}")));
        }
        let mut ports = BTreeSet::new();
        let mut labels = BTreeSet::new();
        for a in &self.agents {
            if a.port != 0 && !ports.insert(a.port) {
                return Err(CliError::Config(format!("port {} used twice", a.port)));
            }
            if !labels.insert(a.label.as_str()) {
                return Err(CliError::Config(format!("label {} used twice", a.label)));
            }
        }
        if self.ledger_port != 0 && ports.contains(&self.ledger_port) {
            return Err(CliError::Config(format!("ledger port {} collides with an agent", self.ledger_port)));
        }
        KeyPair::generate(Some(self.steward_seed.as_bytes()))
            .map_err(|e| CliError::Config(format!("steward seed: {e}")))?;
        Ok(())
    }

    pub fn ledger_url(&self) -> String {
        self.ledger_url
            .clone()
            .unwrap_or_else(|| format!("http://127.0.0.1:{}", self.ledger_port))
    }

    pub fn agent(&self, label: &str) -> Result<&AgentEntry, CliError> {
        self.agents
            .iter()
            .find(|a| a.label == label)
            .ok_or_else(|| CliError::Config(format!("no agent labelled {label:?}")))
    }

    pub fn steward(&self) -> &AgentEntry {
        self.agents.iter().find(|a| a.role == AgentRole::Steward).expect("validated")
    }

    pub fn with_role(&self, role: AgentRole) -> impl Iterator<Item = &AgentEntry> {
        self.agents.iter().filter(move |a| a.role == role)
    }

    pub fn steward_key(&self) -> KeyPair {
        KeyPair::generate(Some(self.steward_seed.as_bytes())).expect("validated")
    }

    /// Genesis file, checked to list the configured steward.
    pub fn genesis(&self) -> Result<GenesisConfig, CliError> {
        let genesis = GenesisConfig::load(&self.genesis_path).map_err(|e| CliError::Config(e.to_string()))?;
        genesis
            .validate()
            .map_err(|e| config_err(&self.genesis_path, e))?;
        let did = self.steward_key().did();
        if !genesis.nyms.iter().any(|n| n.did == did && n.role == Role::Steward) {
            return Err(config_err(
                &self.genesis_path,
                format!("steward {did} is not a genesis steward"),
            ));
        }
        Ok(genesis)
    }

    pub fn load_schemas(&self) -> Result<Vec<SchemaFixture>, CliError> {
        self.schemas
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| config_err(p, e))?;
                serde_json::from_str(&text).map_err(|e| config_err(p, e))
            })
            .collect()
    }

    /// Authorization rules with the PID credential definition filled in.
    pub fn authz_rules(&self, pid_cred_def_id: &str) -> Result<Value, CliError> {
        let path = &self.authz_rules_path;
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path, e))?;
        let text = text.replace(PID_CRED_DEF_PLACEHOLDER, pid_cred_def_id);
        let parsed = bdimhs_agent::authz::AuthzConfig::parse(&text).map_err(|e| config_err(path, e))?;
        Ok(serde_json::to_value(parsed).expect("config serializes"))
    }
}
