//! The end-to-end workflow, driven entirely through agent admin APIs.
//!
//! Every step emits one JSON line. The first failing step ends the run
//! with `CliError::Step` naming it.

use std::collections::BTreeMap;
use std::sync::Arc;

use bdimhs_agent::admin::HttpAgent;
use bdimhs_agent::client::{connect, AdminClient, ClientError};
use bdimhs_agent::AgentConfig;
use bdimhs_bench::net::{spawn_agent, LocalNet};
use bdimhs_core::ledger::LedgerPool;
use serde_json::{json, Map, Value};

use crate::config::{AgentEntry, AgentRole, ScenarioConfig, SchemaFixture};
use crate::CliError;

pub const HOLDER: &str = "Patient";
pub const PID_ISSUER: &str = "Government";
pub const VERIFIER: &str = "Hospital";
pub const REQUESTED: [&str; 2] = ["fullName", "licenseNumber"];
pub const PROTECTED_RESOURCE: &str = "patient-records";
const MAX_CRED_NUM: u64 = 64;

#[derive(Debug, Clone, Copy, Default)]
pub struct DemoOptions {
    /// Start a pool and every agent in this process on ephemeral ports.
    pub auto_bootstrap: bool,
    /// Drive agents already running at their configured addresses.
    pub attach: bool,
    pub skip_revoke: bool,
}

/// Agents the demo talks to, plus whatever it had to start itself.
struct Actors {
    clients: BTreeMap<String, AdminClient>,
    _net: Option<LocalNet>,
    _spawned: Vec<HttpAgent>,
}

impl Actors {
    fn get(&self, label: &str) -> Result<&AdminClient, CliError> {
        self.clients
            .get(label)
            .ok_or_else(|| CliError::Config(format!("no agent labelled {label:?}")))
    }
}

fn line(step: &str, fields: Value) -> Value {
    let mut out = Map::new();
    out.insert("step".into(), json!(step));
    if let Value::Object(rest) = fields {
        out.extend(rest);
    }
    Value::Object(out)
}

fn str_field(v: &Value, field: &str, step: &str) -> Result<String, CliError> {
    v[field]
        .as_str()
        .map(String::from)
        .ok_or_else(|| CliError::step(step, format!("reply has no {field}: {v}")))
}

fn client_for(entry: &AgentEntry) -> AdminClient {
    AdminClient::new(&entry.admin_url()).with_api_key(entry.api_key.clone())
}

fn start(
    config: &ScenarioConfig,
    opts: DemoOptions,
    pool: Option<Arc<LedgerPool>>,
    emit: &mut dyn FnMut(Value),
) -> Result<Actors, CliError> {
    if opts.attach {
        let clients = config.agents.iter().map(|a| (a.label.clone(), client_for(a))).collect();
        return Ok(Actors {
            clients,
            _net: None,
            _spawned: Vec::new(),
        });
    }
    let non_stewards = config.agents.iter().filter(|a| a.role != AgentRole::Steward);
    if opts.auto_bootstrap || pool.is_some() {
        let pool = match pool {
            Some(p) => p,
            None => Arc::new(LedgerPool::bootstrap(config.genesis()?).map_err(|e| CliError::step("bootstrap", e))?),
        };
        let nodes = pool.node_count();
        let mut net = LocalNet::with_pool(pool, &config.steward_seed).map_err(|e| CliError::step("bootstrap", e))?;
        let mut clients = BTreeMap::new();
        clients.insert(config.steward().label.clone(), net.steward_client());
        for a in non_stewards {
            let client = net
                .spawn(AgentConfig::new(&a.label, ""))
                .map_err(|e| CliError::step("bootstrap", e))?;
            clients.insert(a.label.clone(), client);
        }
        emit(line("bootstrap", json!({"nodes": nodes, "agents": clients.len()})));
        return Ok(Actors {
            clients,
            _net: Some(net),
            _spawned: Vec::new(),
        });
    }
    // Ledger and steward run elsewhere; the rest live here.
    let ledger_url = config.ledger_url();
    let steward = config.steward();
    let mut clients = BTreeMap::new();
    clients.insert(steward.label.clone(), client_for(steward));
    let mut spawned = Vec::new();
    for a in non_stewards {
        let agent = spawn_agent(&ledger_url, AgentConfig::new(&a.label, "")).map_err(|e| CliError::step("spawn", e))?;
        clients.insert(a.label.clone(), AdminClient::new(&agent.admin_url()));
        spawned.push(agent);
    }
    Ok(Actors {
        clients,
        _net: None,
        _spawned: spawned,
    })
}

/// Runs the workflow, handing each transcript line to `emit`.
pub fn run_demo(config: &ScenarioConfig, opts: DemoOptions, emit: &mut dyn FnMut(Value)) -> Result<(), CliError> {
    run_demo_with(config, opts, None, emit)
}

/// As `run_demo`, with every agent in this process writing to `pool`.
pub fn run_demo_on(
    config: &ScenarioConfig,
    pool: Arc<LedgerPool>,
    opts: DemoOptions,
    emit: &mut dyn FnMut(Value),
) -> Result<(), CliError> {
    run_demo_with(config, opts, Some(pool), emit)
}

fn run_demo_with(
    config: &ScenarioConfig,
    opts: DemoOptions,
    pool: Option<Arc<LedgerPool>>,
    emit: &mut dyn FnMut(Value),
) -> Result<(), CliError> {
    let schemas = config.load_schemas()?;
    let pid = schemas
        .iter()
        .find(|s| s.name == "PID")
        .ok_or_else(|| CliError::Config("no PID schema fixture".into()))?
        .clone();
    for attr in &pid.attr_names {
        if !pid.sample_values.contains_key(attr) {
            return Err(CliError::Config(format!("PID fixture has no sample value for {attr}")));
        }
    }
    for label in [HOLDER, PID_ISSUER, VERIFIER] {
        config.agent(label)?;
    }
    let actors = start(config, opts, pool, emit)?;
    let steward = actors.get(&config.steward().label)?;

    let step = "enroll";
    for a in config.agents.iter().filter(|a| matches!(a.role, AgentRole::Issuer | AgentRole::Verifier)) {
        let agent = actors.get(&a.label)?;
        let (_, conn) = connect(steward, agent).map_err(|e| CliError::step(step, e))?;
        let reply = agent.enroll(&conn, "ENDORSER").map_err(|e| CliError::step(step, e))?;
        emit(line(
            step,
            json!({"agent": a.label, "role": "ENDORSER", "did": reply["did"]}),
        ));
    }

    let step = "register-schema";
    let mut pid_schema_id = String::new();
    for s in &schemas {
        let issuer = actors.get(&s.issuer)?;
        let attrs: Vec<&str> = s.attr_names.iter().map(String::as_str).collect();
        let schema_id = issuer
            .register_schema(&s.name, &s.version, &attrs)
            .map_err(|e| CliError::step(step, e))?;
        emit(line(
            step,
            json!({"agent": s.issuer, "name": s.name, "version": s.version, "attrs": s.attr_names.len(), "schemaId": schema_id}),
        ));
        if s.name == pid.name {
            pid_schema_id = schema_id;
        }
    }

    let step = "register-cred-def";
    let issuer = actors.get(&pid.issuer)?;
    let cd = issuer
        .register_cred_def(&pid_schema_id, true, Some(MAX_CRED_NUM))
        .map_err(|e| CliError::step(step, e))?;
    let cred_def_id = str_field(&cd, "credDefId", step)?;
    emit(line(
        step,
        json!({"agent": pid.issuer, "credDefId": cred_def_id, "revRegId": cd["revRegId"], "maxCredNum": MAX_CRED_NUM}),
    ));

    let holder = actors.get(HOLDER)?;
    let cred_ex_id = issue(issuer, holder, &pid, &cred_def_id, emit)?;

    let step = "connect";
    let verifier = actors.get(VERIFIER)?;
    let (v_conn, _) = connect(verifier, holder).map_err(|e| CliError::step(step, e))?;
    emit(line(step, json!({"inviter": VERIFIER, "invitee": HOLDER, "state": "ACTIVE"})));

    let step = "authz-rules";
    let rules = config.authz_rules(&cred_def_id)?;
    verifier.install_authz(&rules).map_err(|e| CliError::step(step, e))?;
    emit(line(
        step,
        json!({
            "agent": VERIFIER,
            "rules": rules["rules"].as_array().map_or(0, Vec::len),
            "resources": rules["resources"].as_array().map_or(0, Vec::len),
        }),
    ));

    let credential_id = holder_credential(holder, &cred_def_id)?;
    let first = prove(verifier, holder, &v_conn, &cred_def_id, &credential_id, emit)?;

    let step = "verify";
    let record = verifier.presentation(&first).map_err(|e| CliError::step(step, e))?;
    if record["state"] != "VERIFIED_TRUE" {
        return Err(CliError::step(step, format!("exchange ended in {}", record["state"])));
    }
    let disclosed = record["result"]["disclosed"].clone();
    let mut names: Vec<&str> = disclosed.as_object().map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default();
    names.sort_unstable();
    if names != REQUESTED {
        return Err(CliError::step(step, format!("disclosed {names:?}, requested {REQUESTED:?}")));
    }
    emit(line(
        step,
        json!({
            "state": record["state"],
            "verified": record["result"]["verified"],
            "disclosed": disclosed,
            "presentation": record["presentation"],
        }),
    ));

    let step = "authorize";
    let token = verifier.authorize(&first).map_err(|e| CliError::step(step, e))?;
    let claims = verifier
        .post("/introspect", json!({"token": token}))
        .map_err(|e| CliError::step(step, e))?;
    emit(line(step, json!({"tokenIssued": true, "roles": claims["roles"]})));

    let step = "access-check";
    let access = verifier
        .open_resource(PROTECTED_RESOURCE, &token)
        .map_err(|e| CliError::step(step, e))?;
    emit(line(step, json!({"resource": PROTECTED_RESOURCE, "access": access["access"]})));

    if !opts.skip_revoke {
        let step = "revoke";
        let reply = issuer.revoke(&cred_ex_id).map_err(|e| CliError::step(step, e))?;
        emit(line(step, json!({"agent": pid.issuer, "revoked": true, "notified": reply["notified"]})));
    }

    // The holder is asked again. An honest wallet refuses to present a
    // credential it knows to be revoked.
    let step = "second-proof";
    let second = verifier
        .send_proof_request(&v_conn, &cred_def_id, &REQUESTED)
        .map_err(|e| CliError::step(step, e))?;
    let second_id = str_field(&second, "presExId", step)?;
    let answer = holder.respond_proof_request(
        &second_id,
        json!({"accept": true, "credentialId": credential_id, "revealAttrs": REQUESTED}),
    );
    let outcome = match answer {
        Ok(_) => {
            let rec = verifier.presentation(&second_id).map_err(|e| CliError::step(step, e))?;
            json!({"holder": "PRESENTED", "state": rec["state"]})
        }
        Err(ClientError::Api { code, .. }) => json!({"holder": code}),
        Err(e) => return Err(CliError::step(step, e)),
    };
    emit(line(step, outcome));

    // The first presentation against today's ledger, and what it still buys.
    let step = "post-revocation-verify";
    let result = verifier.reverify(&first).map_err(|e| CliError::step(step, e))?;
    let verified = result["verified"].as_bool().unwrap_or(false);
    let access = match verifier.authorize(&first) {
        Ok(token) => match verifier.open_resource(PROTECTED_RESOURCE, &token) {
            Ok(_) => "allow",
            Err(ClientError::Api { .. }) => "deny",
            Err(e) => return Err(CliError::step(step, e)),
        },
        Err(ClientError::Api { .. }) => "deny",
        Err(e) => return Err(CliError::step(step, e)),
    };
    let expected = (opts.skip_revoke, if opts.skip_revoke { "allow" } else { "deny" });
    if (verified, access) != expected {
        return Err(CliError::step(
            step,
            format!("verified={verified} access={access}, expected verified={} access={}", expected.0, expected.1),
        ));
    }
    emit(line(
        step,
        json!({"revoked": !opts.skip_revoke, "verified": verified, "reason": result["reason"], "access": access}),
    ));
    Ok(())
}

fn issue(
    issuer: &AdminClient,
    holder: &AdminClient,
    pid: &SchemaFixture,
    cred_def_id: &str,
    emit: &mut dyn FnMut(Value),
) -> Result<String, CliError> {
    let step = "connect";
    let (i_conn, _) = connect(issuer, holder).map_err(|e| CliError::step(step, e))?;
    emit(line(step, json!({"inviter": pid.issuer, "invitee": HOLDER, "state": "ACTIVE"})));

    let step = "issue";
    let offer = issuer
        .send_offer(&i_conn, cred_def_id, &pid.sample_values)
        .map_err(|e| CliError::step(step, e))?;
    let cred_ex_id = str_field(&offer, "credExId", step)?;
    let stored = holder.respond_offer(&cred_ex_id, true).map_err(|e| CliError::step(step, e))?;
    let issuer_side = issuer
        .get(&format!("/issue-credential/records/{cred_ex_id}"))
        .map_err(|e| CliError::step(step, e))?;
    if stored["state"] != "STORED" || issuer_side["state"] != "ACKED" {
        return Err(CliError::step(
            step,
            format!("holder {} issuer {}", stored["state"], issuer_side["state"]),
        ));
    }
    emit(line(
        step,
        json!({"issuer": pid.issuer, "holder": HOLDER, "attrs": pid.attr_names.len(), "holderState": stored["state"], "issuerState": issuer_side["state"]}),
    ));
    Ok(cred_ex_id)
}

fn holder_credential(holder: &AdminClient, cred_def_id: &str) -> Result<String, CliError> {
    let step = "proof-request";
    let creds = holder.get("/credentials").map_err(|e| CliError::step(step, e))?;
    creds
        .as_array()
        .into_iter()
        .flatten()
        .find(|c| c["credential"]["credDefId"] == cred_def_id)
        .and_then(|c| c["credentialId"].as_str())
        .map(String::from)
        .ok_or_else(|| CliError::step(step, "holder has no PID credential"))
}

/// Proof request from the verifier, answered by the holder revealing
/// exactly the requested attributes. Returns the exchange id.
fn prove(
    verifier: &AdminClient,
    holder: &AdminClient,
    conn: &str,
    cred_def_id: &str,
    credential_id: &str,
    emit: &mut dyn FnMut(Value),
) -> Result<String, CliError> {
    let step = "proof-request";
    let req = verifier
        .send_proof_request(conn, cred_def_id, &REQUESTED)
        .map_err(|e| CliError::step(step, e))?;
    let pres_ex_id = str_field(&req, "presExId", step)?;
    emit(line(step, json!({"verifier": VERIFIER, "requestedAttrs": REQUESTED})));

    let step = "present";
    let sent = holder
        .respond_proof_request(
            &pres_ex_id,
            json!({"accept": true, "credentialId": credential_id, "revealAttrs": REQUESTED}),
        )
        .map_err(|e| CliError::step(step, e))?;
    emit(line(step, json!({"holder": HOLDER, "revealAttrs": REQUESTED, "state": sent["state"]})));
    Ok(pres_ex_id)
}

/// One transcript line as text, with `step` leading.
pub fn render(line: &Value) -> String {
    let Value::Object(map) = line else {
        return line.to_string();
    };
    let mut out = String::from("{");
    if let Some(step) = map.get("step") {
        out.push_str(&format!("\"step\":{step}"));
    }
    for (k, v) in map.iter().filter(|(k, _)| k.as_str() != "step") {
        if out.len() > 1 {
            out.push(',');
        }
        out.push_str(&format!("{}:{v}", Value::String(k.clone())));
    }
    out.push('}');
    out
}
