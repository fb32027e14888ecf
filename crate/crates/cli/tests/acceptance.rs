//! One PASS/FAIL line per acceptance criterion. Each check recomputes
//! what it can with independent code (plain sha2, hand-written Merkle
//! folds, textbook statistics) rather than trusting the modules under
//! test.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bdimhs::config::ScenarioConfig;
use bdimhs::demo::{run_demo_on, DemoOptions};
use bdimhs_agent::admin::HttpAgent;
use bdimhs_agent::authz::{matching_roles, RoleMappingRule};
use bdimhs_agent::client::{connect, AdminClient, ClientError};
use bdimhs_agent::transport::{HttpTransport, Transport};
use bdimhs_agent::wallet::Wallet;
use bdimhs_agent::{AgentConfig, AgentError};
use bdimhs_bench::{run, run_process_suite, LoadProfile, LocalNet, Mode, Scenario};
use bdimhs_core::anoncreds::{
    self, compute_accumulator, issue, present, verify, Presentation, PresentationRequest, ReasonCode,
    RevocationRegistry,
};
use bdimhs_core::crypto::{self, KeyPair, Side};
use bdimhs_core::encoding::b64_decode;
use bdimhs_core::ledger::{
    export_audit_lines, parse_audit_lines, replay, LedgerError, LedgerPool, LedgerReader, NodeRecord,
    NymPayload, Role, Transaction, TxnKind, TxnRequest,
};
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use sha2::{Digest as _, Sha256};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn scenario() -> ScenarioConfig {
    ScenarioConfig::load_with(&fixtures().join("scenario.json"), |_| None).unwrap()
}

fn steward() -> KeyPair {
    scenario().steward_key()
}

fn fresh_pool() -> LedgerPool {
    LedgerPool::bootstrap(scenario().genesis().unwrap()).unwrap()
}

// Independent hashing: domain tag byte, then the parts.

fn h(tag: u8, parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update([tag]);
    for p in parts {
        hasher.update(p);
    }
    hasher.finalize().into()
}

fn oracle_root(mut level: Vec<[u8; 32]>) -> [u8; 32] {
    let pad: [u8; 32] = Sha256::digest(b"EMPTY-LEAF").into();
    let width = level.len().next_power_of_two().max(2);
    level.resize(width, pad);
    while level.len() > 1 {
        level = level.chunks(2).map(|p| h(0x02, &[&p[0], &p[1]])).collect();
    }
    level[0]
}

fn oracle_path_root(leaf: [u8; 32], path: &[([u8; 32], Side)]) -> [u8; 32] {
    path.iter().fold(leaf, |acc, (sib, side)| match side {
        Side::Left => h(0x02, &[sib, &acc]),
        Side::Right => h(0x02, &[&acc, sib]),
    })
}

fn oracle_commitment(name: &str, value: &str, salt: &[u8]) -> [u8; 32] {
    h(
        0x01,
        &[
            &(name.len() as u32).to_be_bytes(),
            name.as_bytes(),
            &(value.len() as u32).to_be_bytes(),
            value.as_bytes(),
            salt,
        ],
    )
}

fn oracle_status_leaf(salt: &[u8], index: u64, revoked: bool) -> [u8; 32] {
    h(0x04, &[salt, &index.to_be_bytes(), &[revoked as u8]])
}

fn b64_32(v: &Value) -> [u8; 32] {
    b64_decode(v.as_str().unwrap()).unwrap().try_into().unwrap()
}

fn json_path(proof: &Value) -> Vec<([u8; 32], Side)> {
    proof["path"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (b64_32(&s["sibling"]), if s["side"] == "left" { Side::Left } else { Side::Right }))
        .collect()
}

// 1. End-to-end demo through the binary.

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_bdimhs"))
        .arg("--config")
        .arg(fixtures().join("scenario.json"))
        .args(["demo", "--auto-bootstrap"])
        .env_remove("GENESIS_PATH")
        .env_remove("LEDGER_URL")
        .output()
        .unwrap();
    let elapsed = started.elapsed();
    ensure(out.status.success(), || format!("exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr)))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let step = |name: &str| lines.iter().filter(|l| l["step"] == name).cloned().collect::<Vec<_>>();

    ensure(step("bootstrap")[0]["nodes"] == 4, || "pool is not four nodes".into())?;
    let enrolled: Vec<Value> = step("enroll").iter().map(|l| l["agent"].clone()).collect();
    ensure(enrolled == [json!("Government"), json!("NPHS"), json!("Hospital")], || format!("enrolled {enrolled:?}"))?;
    let cd = &step("register-cred-def")[0];
    ensure(cd["revRegId"].is_string(), || "no revocation registry".into())?;

    let verify_line = &step("verify")[0];
    ensure(verify_line["state"] == "VERIFIED_TRUE", || format!("verify: {verify_line}"))?;
    let presentation = &verify_line["presentation"];
    let bytes = serde_json::to_string(presentation).unwrap();
    let pid: Value = serde_json::from_slice(&std::fs::read(fixtures().join("schemas/pid.json")).unwrap()).unwrap();
    let values = pid["sampleValues"].as_object().unwrap();
    let revealed: BTreeSet<&str> = presentation["revealed"].as_object().unwrap().keys().map(String::as_str).collect();
    ensure(revealed == BTreeSet::from(["fullName", "licenseNumber"]), || format!("revealed {revealed:?}"))?;
    for (name, value) in values {
        let shown = revealed.contains(name.as_str());
        let value = value.as_str().unwrap();
        ensure(bytes.contains(&format!("\"{value}\"")) == shown, || format!("{name} value exposure wrong"))?;
        ensure(bytes.contains(&format!("\"{name}\"")) == shown, || format!("{name} key exposure wrong"))?;
        if !shown {
            ensure(!stdout.contains(value), || format!("hidden {name} leaked into the transcript"))?;
        }
    }
    // Each revealed value opens its commitment under the signed root.
    let root = b64_32(&presentation["credentialRoot"]);
    for name in &revealed {
        let r = &presentation["revealed"][*name];
        let salt = b64_decode(r["salt"].as_str().unwrap()).unwrap();
        let leaf = oracle_commitment(name, r["value"].as_str().unwrap(), &salt);
        ensure(oracle_path_root(leaf, &json_path(&r["proof"])) == root, || format!("{name} does not open"))?;
    }

    let auth = &step("authorize")[0];
    ensure(auth["tokenIssued"] == true && auth["roles"] == json!(["clinician"]), || format!("authorize: {auth}"))?;
    ensure(step("access-check")[0]["access"] == "allow", || "access before revocation denied".into())?;
    ensure(step("revoke").len() == 1, || "no revocation".into())?;
    let last = lines.last().unwrap();
    ensure(
        last["step"] == "post-revocation-verify" && last["verified"] == false && last["access"] == "deny",
        || format!("final line {last}"),
    )?;
    Ok(format!(
        "demo exit 0 in {:.2}s; 2 of 5 attributes in presentation bytes; VERIFIED_TRUE, allow, then {} and deny after revocation",
        elapsed.as_secs_f64(),
        last["reason"].as_str().unwrap_or("?")
    ))
}

// 2. Fault tolerance and the write ACL.

fn demo_on(pool: Arc<LedgerPool>) -> Result<Vec<Value>, String> {
    let mut lines = Vec::new();
    run_demo_on(&scenario(), pool, DemoOptions::default(), &mut |l| lines.push(l))
        .map_err(|e| e.to_string())?;
    Ok(lines)
}

fn nym_request(author: &KeyPair, target: &KeyPair, role: Option<Role>) -> TxnRequest {
    let payload = NymPayload {
        dest: target.did(),
        verkey: target.public_key(),
        role,
    };
    TxnRequest::new(TxnKind::Nym, &payload, &author.did(), author)
}

fn acl_request(p: &LedgerPool, author: &KeyPair, kind: TxnKind, assigns_role: bool) -> TxnRequest {
    let did = author.did();
    let signed = |kind, payload: &dyn erased::Payload| TxnRequest::new(kind, &payload.value(), &did, author);
    match kind {
        TxnKind::Nym => nym_request(author, &KeyPair::random(), assigns_role.then_some(Role::Endorser)),
        TxnKind::Schema => signed(kind, &anoncreds::create_schema(&did, "S", "1.0", &["a"]).unwrap()),
        TxnKind::CredDef | TxnKind::RevRegDef | TxnKind::RevRegEntry => {
            // The schema belongs to a helper so any author may reference it.
            let helper = KeyPair::random();
            p.submit(nym_request(&steward(), &helper, Some(Role::Endorser))).unwrap();
            let schema = anoncreds::create_schema(&helper.did(), "S", "1.0", &["a"]).unwrap();
            let seq = p
                .submit(TxnRequest::new(TxnKind::Schema, &schema, &helper.did(), &helper))
                .unwrap()
                .seq_no;
            let (def, _) = anoncreds::create_cred_def(&did, &schema, seq, "t", true);
            if kind == TxnKind::CredDef {
                return signed(kind, &def);
            }
            let mut reg = RevocationRegistry::new(&did, &def.cred_def_id, "r", 4).unwrap();
            let _ = p.submit(signed(TxnKind::CredDef, &def));
            if kind == TxnKind::RevRegDef {
                return signed(kind, &reg.definition());
            }
            let _ = p.submit(signed(TxnKind::RevRegDef, &reg.definition()));
            reg.allocate_index().unwrap();
            signed(kind, &reg.revoke(0).unwrap())
        }
        TxnKind::Node => {
            let key = KeyPair::random().public_key();
            signed(
                kind,
                &NodeRecord {
                    alias: format!("Extra{}", key.did()),
                    node_verkey: key.verkey(),
                    endpoint: "127.0.0.1:9999".into(),
                    services: vec!["VALIDATOR".into()],
                },
            )
        }
        TxnKind::Config => signed(kind, &json!({"maxBatchSize": 10})),
    }
}

mod erased {
    pub trait Payload {
        fn value(&self) -> serde_json::Value;
    }
    impl<T: serde::Serialize> Payload for T {
        fn value(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap()
        }
    }
}

fn criterion_2() -> Outcome {
    // Any single node down, including the leader.
    for down in 0..4 {
        let pool = Arc::new(fresh_pool());
        pool.stop_node(down);
        let before = pool.audit_log().len();
        let lines = demo_on(pool.clone()).map_err(|e| format!("node {down} down: {e}"))?;
        ensure(lines.last().unwrap()["verified"] == false, || format!("node {down} down: wrong ending"))?;
        ensure(pool.audit_log().len() > before + 8, || format!("node {down} down: too few commits"))?;
    }
    // Two down: the demo cannot enroll, and a direct write has no quorum.
    let pool = Arc::new(fresh_pool());
    pool.stop_node(1);
    pool.stop_node(3);
    let err = demo_on(pool.clone()).unwrap_err();
    ensure(err.contains("enroll"), || format!("two down failed at: {err}"))?;
    let submit = pool.submit(nym_request(&steward(), &KeyPair::random(), None));
    ensure(
        submit == Err(LedgerError::NoConsensus { acks: 2, needed: 3 }),
        || format!("two down: {submit:?}"),
    )?;

    // Role x transaction kind, against the permission table.
    let p = fresh_pool();
    let mut authors = vec![(Role::Steward, steward())];
    for role in [Role::Trustee, Role::Endorser, Role::None] {
        let k = KeyPair::random();
        p.submit(nym_request(&steward(), &k, Some(role))).unwrap();
        authors.push((role, k));
    }
    let mut cells = 0;
    for (role, author) in &authors {
        for kind in TxnKind::ALL {
            for assigns in if kind == TxnKind::Nym { vec![false, true] } else { vec![false] } {
                let privileged = matches!(role, Role::Trustee | Role::Steward);
                let allowed = match (kind, assigns) {
                    (TxnKind::Nym, true) | (TxnKind::Node, _) | (TxnKind::Config, _) => privileged,
                    _ => privileged || *role == Role::Endorser,
                };
                let result = p.submit(acl_request(&p, author, kind, assigns));
                let ok = if allowed { result.is_ok() } else { matches!(result, Err(LedgerError::Unauthorized(_))) };
                ensure(ok, || format!("{role:?} {kind:?} assigns={assigns}: {result:?}"))?;
                cells += 1;
            }
        }
    }
    Ok(format!(
        "demo commits with any one of 4 nodes down (leader included); 2 down -> NoConsensus; ACL matrix {cells} cells"
    ))
}

// 3. Replay of the demo's audit log.

fn first_broken_link(log: &[Transaction], tip: &[u8; 32]) -> u64 {
    let mut prev = [0u8; 32];
    for (i, t) in log.iter().enumerate() {
        if t.prev_hash != prev || t.seq_no != i as u64 + 1 {
            return i as u64 + 1;
        }
        prev = t.hash();
    }
    if &prev != tip {
        return log.len() as u64 + 1;
    }
    0
}

fn criterion_3() -> Outcome {
    let pool = Arc::new(fresh_pool());
    demo_on(pool.clone())?;
    let log = pool.audit_log();
    let text = export_audit_lines(&log);
    let parsed = parse_audit_lines(&text).map_err(|e| e.to_string())?;
    let replayed = replay(&parsed, None).map_err(|e| e.to_string())?;
    ensure(
        replayed.to_canonical_bytes() == pool.node_state(0).to_canonical_bytes(),
        || "replayed state differs from node 0".into(),
    )?;
    // The chain itself, recomputed with sha2.
    let mut prev = [0u8; 32];
    for t in &log {
        ensure(t.prev_hash == prev, || format!("chain breaks at {}", t.seq_no))?;
        prev = t.hash();
    }

    let tip = log.last().unwrap().hash();
    let mut checked = 0;
    for k in 0..log.len() {
        let mutations: [fn(&mut Transaction); 4] = [
            |t| t.txn_time += 1,
            |t| t.payload["extra"] = json!(1),
            |t| t.author_did.push('x'),
            |t| t.seq_no += 7,
        ];
        for mutate in mutations {
            let mut bad = log.clone();
            mutate(&mut bad[k]);
            let expected = first_broken_link(&bad, &tip);
            let got = replay(&bad, Some(&tip));
            ensure(got == Err(LedgerError::CorruptLog(expected)), || {
                format!("entry {} mutated: {got:?}, expected CorruptLog({expected})", k + 1)
            })?;
            checked += 1;
        }
        // Same mutation through the exported text.
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut v: Value = serde_json::from_str(&lines[k]).unwrap();
        v["txnTime"] = json!(v["txnTime"].as_u64().unwrap() + 1);
        lines[k] = v.to_string();
        let reparsed = parse_audit_lines(&lines.join("\n")).unwrap();
        ensure(
            replay(&reparsed, Some(&tip)).is_err_and(|e| matches!(e, LedgerError::CorruptLog(_))),
            || format!("text mutation at {} accepted", k + 1),
        )?;
    }
    Ok(format!(
        "{} demo entries replay to node 0's bytes; {checked} single-entry mutations each reported at the expected seqNo",
        log.len()
    ))
}

// 4. Accumulator against a brute-force Merkle root of the status vector.

fn criterion_4() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0x5eed);
    let mut witnesses = 0;
    for max in [8u64, 64] {
        for _ in 0..500 {
            let mut reg = RevocationRegistry::new("Issuer", "Issuer:3:CL:1:t", "r", max).unwrap();
            for _ in 0..max {
                reg.allocate_index().unwrap();
            }
            let density: f64 = rng.gen_range(0.0..1.0);
            let revoked: BTreeSet<u64> = (0..max).filter(|_| rng.gen_bool(density)).collect();
            for &i in &revoked {
                reg.revoke(i).unwrap();
            }
            let leaves: Vec<[u8; 32]> = (0..max).map(|i| oracle_status_leaf(&reg.salt, i, revoked.contains(&i))).collect();
            let expected = oracle_root(leaves);
            ensure(reg.accumulator == expected, || format!("max {max}: registry root differs"))?;
            ensure(compute_accumulator(&reg.salt, max, &revoked) == expected, || "compute_accumulator differs".into())?;
            for i in 0..max {
                match reg.witness(i) {
                    Ok(w) => {
                        ensure(!revoked.contains(&i), || format!("witness for revoked {i}"))?;
                        ensure(anoncreds::verify_witness(&reg.salt, &w), || format!("witness {i} fails"))?;
                        let path: Vec<_> = w.proof.path.iter().map(|s| (s.sibling, s.side)).collect();
                        let leaf = oracle_status_leaf(&reg.salt, i, false);
                        ensure(oracle_path_root(leaf, &path) == expected, || format!("witness {i} path"))?;
                        // The same path cannot vouch for a revoked status.
                        let flipped = oracle_status_leaf(&reg.salt, i, true);
                        ensure(oracle_path_root(flipped, &path) != expected, || "path proves both".into())?;
                        witnesses += 1;
                    }
                    Err(_) => ensure(revoked.contains(&i), || format!("no witness for active {i}"))?,
                }
            }
            // A witness taken before revocation fails once the index is revoked.
            if let Some(&i) = revoked.iter().next() {
                let mut fresh = RevocationRegistry::new("Issuer", "Issuer:3:CL:1:t", "r", max).unwrap();
                fresh.salt = reg.salt;
                fresh.accumulator = compute_accumulator(&fresh.salt, max, &BTreeSet::new());
                for _ in 0..max {
                    fresh.allocate_index().unwrap();
                }
                let mut stale = fresh.witness(i).unwrap();
                stale.accumulator = expected;
                ensure(!anoncreds::verify_witness(&reg.salt, &stale), || format!("stale witness {i} verifies"))?;
            }
        }
    }
    Ok(format!("maxCredNum 8 and 64 x 500 subsets match the brute-force root; {witnesses} active witnesses verify, revoked ones fail"))
}

// 5. Security suite.

struct Issued {
    pool: LedgerPool,
    cred_def_id: String,
    holder: KeyPair,
    credential: anoncreds::Credential,
}

fn issued_pid(revocable: bool) -> Issued {
    let pool = fresh_pool();
    let issuer = KeyPair::random();
    pool.submit(nym_request(&steward(), &issuer, Some(Role::Endorser))).unwrap();
    let attrs = ["licenseNumber", "licenseExpiryDate", "designation", "medicalDiploma", "fullName"];
    let schema = anoncreds::create_schema(&issuer.did(), "PID", "1.0", &attrs).unwrap();
    let seq = pool
        .submit(TxnRequest::new(TxnKind::Schema, &schema, &issuer.did(), &issuer))
        .unwrap()
        .seq_no;
    let (def, def_key) = anoncreds::create_cred_def(&issuer.did(), &schema, seq, "default", revocable);
    pool.submit(TxnRequest::new(TxnKind::CredDef, &def, &issuer.did(), &issuer)).unwrap();
    let mut reg = revocable.then(|| {
        let r = RevocationRegistry::new(&issuer.did(), &def.cred_def_id, "r1", 8).unwrap();
        pool.submit(TxnRequest::new(TxnKind::RevRegDef, &r.definition(), &issuer.did(), &issuer)).unwrap();
        r
    });
    let values: BTreeMap<String, String> = scenario()
        .load_schemas()
        .unwrap()
        .into_iter()
        .find(|s| s.name == "PID")
        .unwrap()
        .sample_values;
    let holder = KeyPair::random();
    let credential = issue(&def, &def_key, &schema, reg.as_mut(), holder.public_key(), &values).unwrap();
    Issued {
        pool,
        cred_def_id: def.cred_def_id,
        holder,
        credential,
    }
}

impl Issued {
    fn present(&self, request: &PresentationRequest, key: &KeyPair) -> Result<Presentation, anoncreds::AnonCredsError> {
        let snapshot = self
            .credential
            .rev_reg_id
            .as_ref()
            .map(|id| self.pool.accumulator_snapshot(id, None).unwrap());
        present(&self.credential, request, key, snapshot.as_ref())
    }
}

fn scalar_mutations(v: &Value, at: String, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) => m.iter().for_each(|(k, c)| scalar_mutations(c, format!("{at}/{k}"), out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, c)| scalar_mutations(c, format!("{at}/{i}"), out)),
        Value::Bool(b) => out.push((at, Value::Bool(!b))),
        Value::Number(n) => out.push((at, json!(n.as_u64().unwrap_or(0) ^ 1))),
        Value::String(s) => {
            let m = match (s.as_str(), b64_decode(s)) {
                ("left", _) => "right".to_string(),
                ("right", _) => "left".to_string(),
                (_, Ok(mut b)) if !b.is_empty() => {
                    b[0] ^= 1;
                    bdimhs_core::encoding::b64_encode(&b)
                }
                _ => format!("{s}x"),
            };
            out.push((at, Value::String(m)));
        }
        Value::Null => {}
    }
}

/// A small REST deployment with one verified PID presentation at the
/// Hospital.
struct RestWorld {
    _net: LocalNet,
    hospital: AdminClient,
    patient: AdminClient,
    h_conn: String,
    cred_def_id: String,
    credential_id: String,
}

fn rest_world() -> RestWorld {
    let config = scenario();
    let mut net = LocalNet::with_pool(Arc::new(fresh_pool()), &config.steward_seed).unwrap();
    let gov = net.spawn(AgentConfig::new("Government", "")).unwrap();
    let hospital = net.spawn(AgentConfig::new("Hospital", "")).unwrap();
    let patient = net.spawn(AgentConfig::new("Patient", "")).unwrap();
    net.endorse(&gov).unwrap();
    let pid = config.load_schemas().unwrap().into_iter().find(|s| s.name == "PID").unwrap();
    let attrs: Vec<&str> = pid.attr_names.iter().map(String::as_str).collect();
    let schema_id = gov.register_schema("PID", "1.0", &attrs).unwrap();
    let cred_def_id = gov.register_cred_def(&schema_id, true, Some(8)).unwrap()["credDefId"]
        .as_str()
        .unwrap()
        .to_owned();
    let (g_conn, _) = connect(&gov, &patient).unwrap();
    let offer = gov.send_offer(&g_conn, &cred_def_id, &pid.sample_values).unwrap();
    patient.respond_offer(offer["credExId"].as_str().unwrap(), true).unwrap();
    let credential_id = patient.get("/credentials").unwrap()[0]["credentialId"].as_str().unwrap().to_owned();
    let (h_conn, _) = connect(&hospital, &patient).unwrap();
    hospital.install_authz(&config.authz_rules(&cred_def_id).unwrap()).unwrap();
    RestWorld {
        _net: net,
        hospital,
        patient,
        h_conn,
        cred_def_id,
        credential_id,
    }
}

impl RestWorld {
    fn request(&self, attrs: &[&str]) -> String {
        let r = self.hospital.send_proof_request(&self.h_conn, &self.cred_def_id, attrs).unwrap();
        r["presExId"].as_str().unwrap().to_owned()
    }

    fn prove(&self, attrs: &[&str]) -> String {
        let id = self.request(attrs);
        self.patient
            .respond_proof_request(&id, json!({"accept": true, "credentialId": self.credential_id, "revealAttrs": attrs}))
            .unwrap();
        id
    }
}

fn criterion_5() -> Outcome {
    let mut done = Vec::new();

    // T3: a credential under a definition that was never written.
    let w = issued_pid(false);
    let rogue = KeyPair::random();
    let schema = anoncreds::create_schema(&rogue.did(), "PID", "1.0", &["fullName"]).unwrap();
    let (def, key) = anoncreds::create_cred_def(&rogue.did(), &schema, 1, "x", false);
    let values = BTreeMap::from([("fullName".to_string(), "Self Asserted".to_string())]);
    let cred = issue(&def, &key, &schema, None, w.holder.public_key(), &values).unwrap();
    let request = PresentationRequest::new(&def.cred_def_id, &["fullName"]);
    let p = present(&cred, &request, &w.holder, None).unwrap();
    let r = verify(&p, &request, &w.pool, crypto::now_ms());
    ensure(!r.verified && r.reason == Some(ReasonCode::UnknownCredDef), || format!("T3: {r:?}"))?;
    done.push("T3".to_string());

    // T4: every scalar of an honest presentation, changed on its own.
    let w = issued_pid(true);
    let request = PresentationRequest::new(&w.cred_def_id, &["fullName", "licenseNumber"]);
    let honest = w.present(&request, &w.holder).unwrap();
    ensure(verify(&honest, &request, &w.pool, crypto::now_ms()).verified, || "T4: honest fails".into())?;
    let mut muts = Vec::new();
    scalar_mutations(&serde_json::to_value(&honest).unwrap(), String::new(), &mut muts);
    let mut rejected = 0;
    for (at, mutated_value) in &muts {
        let mut v = serde_json::to_value(&honest).unwrap();
        *v.pointer_mut(at).unwrap() = mutated_value.clone();
        let Ok(p) = serde_json::from_value::<Presentation>(v) else {
            rejected += 1;
            continue;
        };
        ensure(p != honest, || format!("T4: mutation at {at} was a no-op"))?;
        ensure(!verify(&p, &request, &w.pool, crypto::now_ms()).verified, || format!("T4: mutation at {at} verified"))?;
        rejected += 1;
    }
    done.push(format!("T4({rejected}/{} mutations)", muts.len()));

    // T2: the right credential, signed with someone else's key.
    let thief = KeyPair::random();
    ensure(w.present(&request, &thief).is_err(), || "T2: present accepted a foreign key".into())?;
    let digest = anoncreds::presentation_digest(&honest.credential_root, &request.nonce, honest.timestamp);
    let mut resigned = honest.clone();
    resigned.holder_signature = thief.sign(&digest);
    let mut rebound = resigned.clone();
    rebound.holder_binding_key = thief.public_key();
    for stolen in [resigned, rebound] {
        let r = verify(&stolen, &request, &w.pool, crypto::now_ms());
        let holder_reason = matches!(r.reason, Some(ReasonCode::HolderBindingInvalid | ReasonCode::HolderSignatureInvalid));
        ensure(!r.verified && holder_reason, || format!("T2: {r:?}"))?;
    }
    done.push("T2".to_string());

    // T13: a captured envelope delivered twice over HTTP.
    let rest = rest_world();
    let target = bdimhs_bench::net::spawn_agent(&rest._net.ledger_url(), AgentConfig::new("Target", "")).unwrap();
    let t13 = replay_check(&target)?;
    done.push(format!("T13({t13})"));

    // T14: a token opens a resource once.
    let id = rest.prove(&["fullName", "licenseNumber"]);
    let token = rest.hospital.authorize(&id).unwrap();
    rest.hospital.open_resource("patient-records", &token).map_err(|e| format!("T14 first use: {e}"))?;
    let again = rest.hospital.open_resource("patient-records", &token);
    ensure(
        matches!(&again, Err(ClientError::Api { status: 401, code, .. }) if code == "REPLAY_REJECTED"),
        || format!("T14: {again:?}"),
    )?;
    done.push("T14".to_string());

    // T10: nothing for an exchange that was never presented.
    let pending = rest.request(&["fullName", "licenseNumber"]);
    let r = rest.hospital.authorize(&pending);
    ensure(matches!(&r, Err(e) if e.code() == Some("NOT_VERIFIED")), || format!("T10: {r:?}"))?;
    // A verified exchange whose disclosures meet no rule yields no role.
    let weak = rest.prove(&["medicalDiploma"]);
    ensure(rest.hospital.presentation(&weak).unwrap()["state"] == "VERIFIED_TRUE", || "T10: weak".into())?;
    let r = rest.hospital.authorize(&weak);
    ensure(matches!(&r, Err(e) if e.code() == Some("NO_ROLE")), || format!("T10 no role: {r:?}"))?;
    done.push("T10".to_string());

    // T11: token roles against the rules file, and rule matching against
    // a restatement over random disclosures.
    let rules: Vec<RoleMappingRule> =
        serde_json::from_value(scenario().authz_rules(&rest.cred_def_id).unwrap()["rules"].clone()).unwrap();
    let claims = rest.hospital.post("/introspect", json!({"token": rest.hospital.authorize(&id).unwrap()})).unwrap();
    let disclosed: BTreeMap<String, String> =
        serde_json::from_value(rest.hospital.presentation(&id).unwrap()["result"]["disclosed"].clone()).unwrap();
    let expected = oracle_roles(&rules, &rest.cred_def_id, &disclosed);
    let got: BTreeSet<String> = serde_json::from_value(claims["roles"].clone()).unwrap();
    ensure(got == expected, || format!("T11: token {got:?} vs rules {expected:?}"))?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let names = ["fullName", "licenseNumber", "designation", "medicalDiploma", "licenseExpiryDate"];
    let vals = ["physician", "administrator", "nurse", "x"];
    for _ in 0..500 {
        let mut d = BTreeMap::new();
        for n in names {
            if rng.gen_bool(0.5) {
                d.insert(n.to_string(), vals[rng.gen_range(0..vals.len())].to_string());
            }
        }
        let def = if rng.gen_bool(0.8) { rest.cred_def_id.clone() } else { "Other:3:CL:1:t".into() };
        let got: BTreeSet<String> = matching_roles(&rules, &def, &d).into_iter().collect();
        ensure(got == oracle_roles(&rules, &def, &d), || format!("T11: {d:?}"))?;
    }
    done.push("T11".to_string());
    Ok(done.join(" "))
}

fn oracle_roles(rules: &[RoleMappingRule], def: &str, disclosed: &BTreeMap<String, String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for r in rules.iter().filter(|r| r.cred_def_id == def) {
        let has_all = r.required_attrs.iter().all(|a| disclosed.contains_key(a));
        let equal = r.attr_equals.iter().flatten().all(|(k, v)| disclosed.get(k) == Some(v));
        if has_all && equal {
            out.extend(r.grants.iter().cloned());
        }
    }
    out
}

fn replay_check(target: &HttpAgent) -> Result<String, String> {
    let (conn, _) = target.agent.create_invitation(None).map_err(|e| e.to_string())?;
    let before = target.agent.events().history().len();
    let mallory = KeyPair::random();
    let env = crypto::seal(&mallory, &conn.invitation.recipient_key, br#"{"@type":"connection_ack"}"#);
    let transport = HttpTransport::new();
    let endpoint = target.agent.endpoint().to_owned();
    let first = transport.send(&endpoint, &env);
    ensure(!matches!(first, Err(AgentError::ReplayRejected(_))), || "first delivery flagged as replay".into())?;
    let second = transport.send(&endpoint, &env);
    ensure(matches!(second, Err(AgentError::ReplayRejected(_))), || format!("T13: {second:?}"))?;
    ensure(target.agent.events().history().len() == before, || "T13: replay changed state".into())?;
    Ok("REPLAY_REJECTED".into())
}

// 6. Load trends.

fn criterion_6() -> Outcome {
    let mut net = LocalNet::with_pool(Arc::new(fresh_pool()), &scenario().steward_seed).unwrap();
    let t = net.targets().unwrap();
    let go = |s, n, rampup, mode| run(&LoadProfile::new(s, n, rampup, mode), &t).map_err(|e| e.to_string());

    let small = go(Scenario::ConnectionInvitation, 10, 1, Mode::Sequential)?.report;
    let large = go(Scenario::ConnectionInvitation, 500, 1, Mode::Sequential)?.report;
    let ratio = large.avg_ms.max(small.avg_ms) / large.avg_ms.min(small.avg_ms);
    ensure(small.errors + large.errors == 0, || "connection errors".into())?;
    ensure(ratio < 3.0, || format!("(a) connection avg {:.2} vs {:.2} ms", small.avg_ms, large.avg_ms))?;

    let seq = go(Scenario::IssueCredential, 100, 0, Mode::Sequential)?.report;
    let conc = go(Scenario::IssueCredential, 100, 0, Mode::Concurrent)?.report;
    ensure(seq.errors + conc.errors == 0, || "issue errors".into())?;
    ensure(conc.avg_ms >= seq.avg_ms, || format!("(b) concurrent {:.2} < sequential {:.2}", conc.avg_ms, seq.avg_ms))?;

    for s in Scenario::ALL {
        let r = go(s, 1, 1, Mode::Sequential)?.report;
        ensure(r.stddev == 0.0 && r.errors == 0, || format!("(c) {s}: stddev {}", r.stddev))?;
    }

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    bdimhs_bench::export(&go(Scenario::RegisterSchema, 3, 0, Mode::Sequential)?, &csv).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&csv).unwrap();
    let header = "scenario,n_requests,mode,rampup_s,min_ms,max_ms,avg_ms,stddev,throughput_rps,errors";
    ensure(text.lines().next() == Some(header), || format!("(d) header {:?}", text.lines().next()))?;
    Ok(format!(
        "(a) connection avg n=10 {:.2} ms vs n=500 {:.2} ms ({ratio:.2}x); (b) issue n=100 concurrent {:.2} >= sequential {:.2} ms; (c) n=1 stddev 0; (d) header exact",
        small.avg_ms, large.avg_ms, conc.avg_ms, seq.avg_ms
    ))
}

// 7. Process-time suite.

fn criterion_7() -> Outcome {
    // Best of three per size: the n=10 phase lasts tens of milliseconds, so
    // one scheduler hiccup would otherwise dominate the ratio.
    let best = |n: usize| -> Result<(f64, Vec<f64>), String> {
        let samples = (0..3)
            .map(|_| run_process_suite(n).map(|t| t.exchange_credential).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((samples.iter().cloned().fold(f64::INFINITY, f64::min), samples))
    };
    let (ten, ten_all) = best(10)?;
    let (hundred, hundred_all) = best(100)?;
    let ratio = hundred / ten;
    let detail = format!(
        "exchangeCredential best {hundred:.3}s (n=100) / {ten:.3}s (n=10) = {ratio:.2}x; samples {hundred_all:.3?} / {ten_all:.3?}"
    );
    ensure((5.0..=40.0).contains(&ratio), || detail.clone())?;
    Ok(detail)
}

// 8. Wallet export and import.

fn criterion_8() -> Outcome {
    const SENTINEL: &str = "SENTINEL-7f3a91-do-not-leak";
    let mut wallet = Wallet::new(&format!("{SENTINEL}-label"));
    let keys: Vec<KeyPair> = (0..3).map(|_| wallet.create_key()).collect();
    let w = issued_pid(true);
    let mut credential = w.credential.clone();
    credential.attributes.get_mut("fullName").unwrap().value = SENTINEL.into();
    wallet.credentials.push(
        serde_json::from_value(json!({
            "credentialId": "00000000-0000-4000-8000-000000000001",
            "credExId": "00000000-0000-4000-8000-000000000002",
            "credential": credential,
            "revoked": false,
        }))
        .unwrap(),
    );
    let blob = wallet.export("correct horse battery staple");
    let restored = Wallet::import(&blob, "correct horse battery staple").map_err(|e| e.to_string())?;
    ensure(restored == wallet, || "round trip differs".into())?;
    ensure(Wallet::import(&blob, "correct horse battery stapler").is_err(), || "wrong passphrase accepted".into())?;
    let mut tampered = blob.clone();
    let last = tampered.len() - 1;
    tampered[last] ^= 1;
    ensure(Wallet::import(&tampered, "correct horse battery staple").is_err(), || "tampered blob accepted".into())?;

    let contains = |needle: &[u8]| blob.windows(needle.len()).any(|w| w == needle);
    ensure(!contains(SENTINEL.as_bytes()), || "sentinel in blob".into())?;
    ensure(!contains(b"SENTINEL"), || "sentinel prefix in blob".into())?;
    for k in &keys {
        ensure(!contains(k.seed()), || "raw key seed in blob".into())?;
        ensure(!contains(bdimhs_core::encoding::b64_encode(k.seed()).as_bytes()), || "encoded seed in blob".into())?;
    }
    ensure(wallet.export("correct horse battery staple") != blob, || "export is deterministic".into())?;
    Ok(format!("{} byte blob round trips; wrong passphrase and tampering rejected; no sentinel or key bytes", blob.len()))
}

fn main() {
    let criteria: [(u8, &str, fn() -> Outcome); 8] = [
        (1, "end-to-end demo", criterion_1),
        (2, "ledger fault tolerance and ACL", criterion_2),
        (3, "replay and audit determinism", criterion_3),
        (4, "accumulator oracle", criterion_4),
        (5, "security suite", criterion_5),
        (6, "bench trends", criterion_6),
        (7, "process-time suite", criterion_7),
        (8, "wallet round trip", criterion_8),
    ];
    let only: Option<u8> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                println!("criterion {n} FAIL [{name}] {detail} ({secs:.1}s)");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
