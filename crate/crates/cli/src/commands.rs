use std::path::{Path, PathBuf};
use std::sync::Arc;

use bdimhs_agent::admin::{spawn_http_agent, HttpAgent, HttpAgentOptions};
use bdimhs_agent::client::AdminClient;
use bdimhs_agent::ledger_http::{ledger_router, LedgerClient};
use bdimhs_agent::server::{self, ServerHandle};
use bdimhs_agent::wallet::Wallet;
use bdimhs_agent::AgentConfig;
use bdimhs_bench::{export, run, LoadProfile, LocalNet, Mode, Scenario, Targets};
use bdimhs_core::ledger::{parse_audit_lines, replay, Ledger, LedgerPool};
use serde_json::{json, Value};

use crate::config::{AgentRole, ScenarioConfig};
use crate::CliError;

/// A running pool behind its HTTP face, with the steward agent.
pub struct Bootstrapped {
    pub pool: Arc<LedgerPool>,
    pub ledger: ServerHandle,
    pub steward: HttpAgent,
}

impl Bootstrapped {
    pub fn ready_line(&self) -> Value {
        json!({
            "ready": true,
            "nodes": self.pool.node_count(),
            "ledger": self.ledger.base_url(),
            "steward": self.steward.admin_url(),
            "stewardDid": self.steward.agent.public_did(),
        })
    }
}

/// Starts the pool from the configured genesis and serves it with the
/// steward on their configured ports.
pub fn bootstrap(config: &ScenarioConfig) -> Result<Bootstrapped, CliError> {
    let genesis = config.genesis()?;
    let steward = config.steward();
    let ledger_addr = format!("127.0.0.1:{}", config.ledger_port);
    let listener =
        server::bind(&ledger_addr).map_err(|e| CliError::Config(format!("ledger port {ledger_addr}: {e}")))?;
    // Claim the steward port before any state exists.
    let steward_addr = format!("{}:{}", steward.endpoint, steward.port);
    drop(server::bind(&steward_addr).map_err(|e| CliError::Config(format!("steward port {steward_addr}: {e}")))?);

    let pool = Arc::new(LedgerPool::bootstrap(genesis).map_err(|e| CliError::Config(e.to_string()))?);
    let ledger = server::spawn(listener, ledger_router(pool.clone())).map_err(|e| CliError::Config(e.to_string()))?;
    let mut agent_config = AgentConfig::new(&steward.label, "");
    agent_config.public_seed = Some(config.steward_seed.clone());
    let client = Arc::new(LedgerClient::new(&ledger.base_url())) as Arc<dyn Ledger>;
    let options = HttpAgentOptions {
        bind: steward_addr,
        public_host: None,
        api_key: steward.api_key.clone(),
        webhook_url: None,
    };
    let steward = spawn_http_agent(agent_config, None, client, options).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Bootstrapped { pool, ledger, steward })
}

/// Blocks until the process is interrupted.
pub fn wait_for_interrupt() -> Result<(), CliError> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    rt.block_on(tokio::signal::ctrl_c())
        .map_err(|e| CliError::Config(e.to_string()))
}

pub struct ServeOptions {
    pub label: String,
    pub wallet_path: Option<PathBuf>,
    pub passphrase: Option<String>,
    pub webhook_url: Option<String>,
}

/// Runs one configured agent against the configured ledger. A wallet
/// file, when given, is loaded if present and written back on exit.
pub fn serve(config: &ScenarioConfig, opts: &ServeOptions) -> Result<HttpAgent, CliError> {
    let entry = config.agent(&opts.label)?;
    let wallet = match (&opts.wallet_path, &opts.passphrase) {
        (Some(path), Some(pass)) if path.exists() => {
            Some(Wallet::load(path, pass).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?)
        }
        (Some(_), None) => return Err(CliError::Config("--wallet needs WALLET_PASSPHRASE".into())),
        _ => None,
    };
    let mut agent_config = AgentConfig::new(&entry.label, "");
    if entry.role == AgentRole::Steward {
        agent_config.public_seed = Some(config.steward_seed.clone());
    }
    let ledger = Arc::new(LedgerClient::new(&config.ledger_url())) as Arc<dyn Ledger>;
    let options = HttpAgentOptions {
        bind: format!("{}:{}", entry.endpoint, entry.port),
        public_host: None,
        api_key: entry.api_key.clone(),
        webhook_url: opts.webhook_url.clone(),
    };
    spawn_http_agent(agent_config, wallet, ledger, options).map_err(|e| CliError::Config(e.to_string()))
}

pub fn save_wallet(agent: &HttpAgent, opts: &ServeOptions) -> Result<(), CliError> {
    if let (Some(path), Some(pass)) = (&opts.wallet_path, &opts.passphrase) {
        agent
            .agent
            .wallet_snapshot()
            .save(path, pass)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Fetches the ledger's audit log and checks it replays. Returns the
/// log text and a summary line.
pub fn export_log(ledger_url: &str) -> Result<(String, Value), CliError> {
    let client = LedgerClient::new(ledger_url);
    let text = client.audit_lines().map_err(|e| CliError::step("export-log", e))?;
    let log = parse_audit_lines(&text).map_err(|e| CliError::step("export-log", e))?;
    let state = replay(&log, None).map_err(|e| CliError::step("export-log", e))?;
    let tip: String = state.tip_hash().iter().map(|b| format!("{b:02x}")).collect();
    Ok((text, json!({"entries": log.len(), "tipHash": tip})))
}

pub fn write_log(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub struct BenchArgs {
    pub scenario: String,
    pub n: usize,
    pub rampup: u64,
    pub mode: String,
    pub out: PathBuf,
    pub attach: bool,
}

/// Agents a bench run drives when attaching to a running deployment.
pub const BENCH_ISSUER: &str = "Government";
pub const BENCH_HOLDER: &str = "Patient";
pub const BENCH_RECIPIENT: &str = "NPHS";
pub const BENCH_VERIFIER: &str = "Hospital";

pub fn bench(config: &ScenarioConfig, args: &BenchArgs) -> Result<bdimhs_bench::MetricsReport, CliError> {
    let scenario: Scenario = args.scenario.parse().map_err(|e: bdimhs_bench::BenchError| CliError::Config(e.to_string()))?;
    let mode: Mode = args.mode.parse().map_err(|e: bdimhs_bench::BenchError| CliError::Config(e.to_string()))?;
    let profile = LoadProfile::new(scenario, args.n, args.rampup, mode);
    profile.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let step = "bench";
    let mut _net = None;
    let targets = if args.attach {
        let client = |label: &str| -> Result<AdminClient, CliError> {
            let e = config.agent(label)?;
            Ok(AdminClient::new(&e.admin_url()).with_api_key(e.api_key.clone()))
        };
        Targets::attach(
            client(BENCH_ISSUER)?,
            client(BENCH_HOLDER)?,
            client(BENCH_RECIPIENT)?,
            client(BENCH_VERIFIER)?,
        )
        .map_err(|e| CliError::step(step, e))?
    } else {
        let pool = LedgerPool::bootstrap(config.genesis()?).map_err(|e| CliError::step(step, e))?;
        let mut net = LocalNet::with_pool(Arc::new(pool), &config.steward_seed).map_err(|e| CliError::step(step, e))?;
        let targets = net.targets().map_err(|e| CliError::step(step, e))?;
        _net = Some(net);
        targets
    };
    let result = run(&profile, &targets).map_err(|e| CliError::step(step, e))?;
    export(&result, &args.out).map_err(|e| CliError::step(step, e))?;
    Ok(result.report)
}
