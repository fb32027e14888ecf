use std::fmt;
use std::time::Instant;

use bdimhs_agent::client::{connect, AdminClient, ClientError};
use bdimhs_agent::AgentConfig;
use serde::{Deserialize, Serialize};

use crate::net::{pid_values, LocalNet, PID_ATTRS};
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Phase {
    Startup,
    Connection,
    RegisterSchema,
    ExchangeCredential,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Startup => "startup",
            Phase::Connection => "connection",
            Phase::RegisterSchema => "registerSchema",
            Phase::ExchangeCredential => "exchangeCredential",
        })
    }
}

/// Seconds spent in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessTimes {
    pub n_exchanges: usize,
    pub startup: f64,
    pub connection: f64,
    pub register_schema: f64,
    pub exchange_credential: f64,
}

pub fn run_process_suite(n_exchanges: usize) -> Result<ProcessTimes, BenchError> {
    run_process_suite_with(n_exchanges, |_, _| {})
}

/// Like `run_process_suite`, calling `before` ahead of every phase after
/// startup. Tests use it to break the environment mid-run.
pub fn run_process_suite_with<F>(n_exchanges: usize, before: F) -> Result<ProcessTimes, BenchError>
where
    F: Fn(Phase, &LocalNet),
{
    let fail = |phase: Phase| move |e: BenchError| BenchError::Phase { phase, detail: e.to_string() };
    let api = |phase: Phase| move |e: ClientError| BenchError::Phase { phase, detail: e.to_string() };

    let t = Instant::now();
    let (net, issuer, holder) = (|| {
        let mut net = LocalNet::start()?;
        let issuer = net.spawn(AgentConfig::new("Issuer", ""))?;
        let mut config = AgentConfig::new("Holder", "");
        config.auto_accept_offers = true;
        let holder = net.spawn(config)?;
        net.endorse(&issuer)?;
        Ok((net, issuer, holder))
    })()
    .map_err(fail(Phase::Startup))?;
    let startup = t.elapsed().as_secs_f64();

    before(Phase::Connection, &net);
    let t = Instant::now();
    let (conn, _) = connect(&issuer, &holder).map_err(api(Phase::Connection))?;
    let connection = t.elapsed().as_secs_f64();

    before(Phase::RegisterSchema, &net);
    let t = Instant::now();
    let cred_def_id = (|| {
        let schema_id = issuer.register_schema("PID", "1.0", &PID_ATTRS)?;
        let cd = issuer.register_cred_def(&schema_id, false, None)?;
        Ok(cd["credDefId"].as_str().unwrap_or_default().to_owned())
    })()
    .map_err(api(Phase::RegisterSchema))?;
    let register_schema = t.elapsed().as_secs_f64();

    before(Phase::ExchangeCredential, &net);
    let t = Instant::now();
    for _ in 0..n_exchanges {
        exchange(&issuer, &conn, &cred_def_id).map_err(api(Phase::ExchangeCredential))?;
    }
    let exchange_credential = t.elapsed().as_secs_f64();

    Ok(ProcessTimes {
        n_exchanges,
        startup,
        connection,
        register_schema,
        exchange_credential,
    })
}

fn exchange(issuer: &AdminClient, conn: &str, cred_def_id: &str) -> Result<(), ClientError> {
    let offer = issuer.send_offer(conn, cred_def_id, &pid_values())?;
    let id = offer["credExId"].as_str().unwrap_or_default();
    let record = issuer.get(&format!("/issue-credential/records/{id}"))?;
    if record["state"] != "ACKED" {
        return Err(ClientError::Decode(format!("exchange ended in {}", record["state"])));
    }
    Ok(())
}
