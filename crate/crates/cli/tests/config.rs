use std::collections::HashMap;
use std::path::{Path, PathBuf};

use bdimhs::config::{AgentRole, ScenarioConfig, PID_CRED_DEF_PLACEHOLDER};
use bdimhs::CliError;
use bdimhs_core::crypto::KeyPair;
use bdimhs_core::ledger::GenesisConfig;
use serde_json::{json, Value};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn no_env(_: &str) -> Option<String> {
    None
}

fn write_config(dir: &Path, body: Value) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
    path
}

fn base_config() -> Value {
    serde_json::from_slice(&std::fs::read(fixtures().join("scenario.json")).unwrap()).unwrap()
}

#[test]
fn shipped_scenario_loads() {
    let c = ScenarioConfig::load_with(&fixtures().join("scenario.json"), no_env).unwrap();
    assert_eq!(c.steward().label, "Steward");
    assert_eq!(c.with_role(AgentRole::Issuer).count(), 2);
    assert_eq!(c.agent("Patient").unwrap().role, AgentRole::Holder);
    assert_eq!(c.agent("Hospital").unwrap().admin_url(), "http://127.0.0.1:8050");
    assert_eq!(c.ledger_url(), "http://127.0.0.1:9700");
    assert!(c.genesis_path.is_absolute() || c.genesis_path.starts_with(fixtures()));

    let schemas = c.load_schemas().unwrap();
    let names: Vec<&str> = schemas.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["NID", "MPOA", "PID"]);
    let pid = &schemas[2];
    assert_eq!(pid.attr_names.len(), 5);
    assert!(pid.attr_names.iter().all(|a| pid.sample_values.contains_key(a)));
    for s in &schemas {
        c.agent(&s.issuer).unwrap();
    }
}

#[test]
fn shipped_genesis_is_the_four_node_desk_pool() {
    let c = ScenarioConfig::load_with(&fixtures().join("scenario.json"), no_env).unwrap();
    let steward = KeyPair::generate(Some(c.steward_seed.as_bytes())).unwrap();
    let expected = GenesisConfig::desk(4, 9701, &[steward.public_key()]).to_lines();
    assert_eq!(std::fs::read_to_string(&c.genesis_path).unwrap(), expected);
    let g = c.genesis().unwrap();
    assert_eq!((g.nodes.len(), g.quorum()), (4, 3));
}

#[test]
fn environment_overrides_apply() {
    let env: HashMap<&str, &str> = [
        ("GENESIS_PATH", "/elsewhere/genesis.jsonl"),
        ("AGENT_LABEL", "Hospital"),
        ("AGENT_ENDPOINT", "10.0.0.7"),
        ("LEDGER_URL", "http://ledger.test:9000"),
    ]
    .into_iter()
    .collect();
    let c = ScenarioConfig::load_with(&fixtures().join("scenario.json"), |k| env.get(k).map(|v| v.to_string())).unwrap();
    assert_eq!(c.genesis_path, PathBuf::from("/elsewhere/genesis.jsonl"));
    assert_eq!(c.agent("Hospital").unwrap().admin_url(), "http://10.0.0.7:8050");
    assert_eq!(c.agent("Patient").unwrap().endpoint, "127.0.0.1");
    assert_eq!(c.ledger_url(), "http://ledger.test:9000");
    // Endpoint without a label is ignored.
    let only_endpoint = ScenarioConfig::load_with(&fixtures().join("scenario.json"), |k| {
        (k == "AGENT_ENDPOINT").then(|| "10.9.9.9".to_string())
    })
    .unwrap();
    assert!(only_endpoint.agents.iter().all(|a| a.endpoint == "127.0.0.1"));
}

fn load_err(body: Value) -> String {
    let dir = tempfile::tempdir().unwrap();
    let err = ScenarioConfig::load_with(&write_config(dir.path(), body), no_env).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    err.to_string()
}

#[test]
fn invalid_scenarios_are_config_errors() {
    let mut two_stewards = base_config();
    two_stewards["agents"][1]["role"] = json!("steward");
    assert!(load_err(two_stewards).contains("exactly one steward"));

    let mut no_steward = base_config();
    no_steward["agents"][0]["role"] = json!("holder");
    assert!(load_err(no_steward).contains("found 0"));

    let mut dup_port = base_config();
    dup_port["agents"][2]["port"] = json!(8030);
    assert!(load_err(dup_port).contains("8030"));

    let mut ledger_clash = base_config();
    ledger_clash["ledgerPort"] = json!(8060);
    assert!(load_err(ledger_clash).contains("8060"));

    let mut bad_role = base_config();
    bad_role["agents"][4]["role"] = json!("patient");
    load_err(bad_role);

    let mut short_seed = base_config();
    short_seed["stewardSeed"] = json!("too-short");
    assert!(load_err(short_seed).contains("seed"));

    let dir = tempfile::tempdir().unwrap();
    let err = ScenarioConfig::load_with(&dir.path().join("absent.json"), no_env).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
}

#[test]
fn genesis_must_list_the_configured_steward() {
    let dir = tempfile::tempdir().unwrap();
    let other = KeyPair::random();
    std::fs::write(
        dir.path().join("genesis.jsonl"),
        GenesisConfig::desk(4, 9701, &[other.public_key()]).to_lines(),
    )
    .unwrap();
    let mut body = base_config();
    body["genesisPath"] = json!(dir.path().join("genesis.jsonl"));
    let c = ScenarioConfig::load_with(&write_config(dir.path(), body.clone()), no_env).unwrap();
    assert!(c.genesis().unwrap_err().to_string().contains("not a genesis steward"));

    std::fs::write(dir.path().join("genesis.jsonl"), "{not json\n").unwrap();
    let c = ScenarioConfig::load_with(&write_config(dir.path(), body), no_env).unwrap();
    assert_eq!(c.genesis().unwrap_err().exit_code(), 2);
}

#[test]
fn rules_placeholder_is_substituted() {
    let c = ScenarioConfig::load_with(&fixtures().join("scenario.json"), no_env).unwrap();
    let raw = std::fs::read_to_string(&c.authz_rules_path).unwrap();
    assert!(raw.contains(PID_CRED_DEF_PLACEHOLDER));
    let rules = c.authz_rules("Gov:3:CL:12:default").unwrap();
    assert!(!rules.to_string().contains(PID_CRED_DEF_PLACEHOLDER));
    assert_eq!(rules["rules"][0]["credDefId"], "Gov:3:CL:12:default");
    assert_eq!(rules["tokenLifetimeS"], 300);
}
