mod support;

use std::sync::atomic::Ordering;

use bdimhs_agent::agent::{connect, Agent, ProofDecision};
use bdimhs_agent::events::{Topic, WebhookEvent};
use bdimhs_agent::records::StateMachine;
use proptest::prelude::*;
use support::{accept, issue_pid, pid_values, strings, World};
use uuid::Uuid;

/// Every record's event list must equal its transition history, in order,
/// and every event must belong to a record.
fn assert_complete(agent: &Agent) {
    let events = agent.events().history();
    for pair in events.windows(2) {
        assert!(pair[0].seq < pair[1].seq);
    }
    let states = |topic: Topic, id: Uuid| -> Vec<String> {
        events
            .iter()
            .filter(|e| e.topic == topic && e.record_id == id)
            .map(|e| e.new_state.clone())
            .collect()
    };
    let mut covered = 0;
    for c in agent.connections() {
        let expected: Vec<String> = c.history.iter().map(|s| s.name()).collect();
        assert_eq!(states(Topic::Connections, c.conn_id), expected, "connection {}", c.conn_id);
        covered += expected.len();
    }
    for x in agent.credential_exchanges() {
        let expected: Vec<String> = x.history.iter().map(|s| s.name()).collect();
        assert_eq!(states(Topic::IssueCredential, x.cred_ex_id), expected);
        covered += expected.len();
    }
    for x in agent.presentation_exchanges() {
        let expected: Vec<String> = x.history.iter().map(|s| s.name()).collect();
        assert_eq!(states(Topic::PresentProof, x.pres_ex_id), expected);
        covered += expected.len();
    }
    for c in agent.credentials().iter().filter(|c| c.revoked) {
        assert_eq!(states(Topic::Revocation, c.credential_id), vec!["REVOKED".to_string()]);
        covered += 1;
    }
    assert_eq!(covered, events.len(), "{}: stray events", agent.label());
}

#[test]
fn events_mirror_histories_across_a_full_scenario() {
    let w = World::new();
    let (gov, cd) = w.pid_issuer("Government", true);
    let doctor = w.agent("Doctor");
    let hospital = w.agent("Hospital");
    let id = issue_pid(&gov, &doctor, &cd.cred_def_id, &pid_values());
    let (conn, _) = connect(&hospital, &doctor).unwrap();
    let r1 = hospital
        .send_proof_request(conn, &cd.cred_def_id, &strings(&["fullName"]), None)
        .unwrap();
    doctor.respond_proof_request(r1.pres_ex_id, &accept()).unwrap();
    let r2 = hospital
        .send_proof_request(conn, &cd.cred_def_id, &strings(&["designation"]), None)
        .unwrap();
    doctor.respond_proof_request(r2.pres_ex_id, &ProofDecision::default()).unwrap();
    let c2 = gov.connection_with(&doctor).unwrap();
    let declined = gov.send_offer(c2, &cd.cred_def_id, &pid_values()).unwrap();
    doctor.respond_offer(declined.cred_ex_id, false).unwrap();
    gov.revoke(id, true).unwrap();
    // A failed handshake and a rejected invitation.
    hospital.faults.corrupt_challenge.store(true, Ordering::SeqCst);
    let (_, url) = hospital.create_invitation(None).unwrap();
    let _ = doctor.receive_invitation_url(&url, true);
    let (_, url) = hospital.create_invitation(None).unwrap();
    doctor.receive_invitation_url(&url, false).unwrap();

    for agent in [&w.steward, &gov, &doctor, &hospital] {
        assert_complete(agent);
    }
    let revocations: Vec<WebhookEvent> = doctor
        .events()
        .history()
        .into_iter()
        .filter(|e| e.topic == Topic::Revocation)
        .collect();
    assert_eq!(revocations.len(), 1);
    assert_eq!(revocations[0].payload["credExId"], serde_json::json!(id));
}

#[test]
fn payload_carries_the_record_after_the_transition() {
    let w = World::new();
    let gov = w.agent("Government");
    let patient = w.agent("Patient");
    let (g, _) = connect(&gov, &patient).unwrap();
    let events = gov.events().for_record(g);
    let last = events.last().unwrap();
    assert_eq!(last.new_state, "ACTIVE");
    assert_eq!(last.payload["state"], "ACTIVE");
    assert_eq!(last.payload["connId"], serde_json::json!(g));
}

#[test]
fn subscribers_see_live_events() {
    let w = World::new();
    let gov = w.agent("Government");
    let patient = w.agent("Patient");
    let mut rx = patient.events().subscribe();
    connect(&gov, &patient).unwrap();
    let mut seen = Vec::new();
    while let Ok(e) = rx.try_recv() {
        seen.push(e.new_state);
    }
    assert_eq!(seen, ["INVITED", "REQUESTED", "RESPONDED", "ACTIVE"]);
}

#[derive(Debug, Clone)]
enum Step {
    Connect,
    RejectInvite,
    Offer { accept: bool },
    Request { accept: bool, attr: usize },
    Revoke { pick: usize },
    BrokenHandshake,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        Just(Step::Connect),
        Just(Step::RejectInvite),
        any::<bool>().prop_map(|accept| Step::Offer { accept }),
        (any::<bool>(), 0..5usize).prop_map(|(accept, attr)| Step::Request { accept, attr }),
        (0..8usize).prop_map(|pick| Step::Revoke { pick }),
        Just(Step::BrokenHandshake),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn completeness_holds_for_random_sessions(steps in prop::collection::vec(step(), 1..12)) {
        let w = World::new();
        let (gov, cd) = w.pid_issuer("Government", true);
        let holder = w.agent("Holder");
        let verifier = w.agent("Verifier");
        let attrs = support::pid_attrs();
        let mut issued = Vec::new();
        for s in steps {
            match s {
                Step::Connect => {
                    connect(&verifier, &holder).unwrap();
                }
                Step::RejectInvite => {
                    let (_, url) = verifier.create_invitation(None).unwrap();
                    holder.receive_invitation_url(&url, false).unwrap();
                }
                Step::Offer { accept } => {
                    let conn = gov.connection_with(&holder).unwrap_or_else(|| connect(&gov, &holder).unwrap().0);
                    let ex = gov.send_offer(conn, &cd.cred_def_id, &pid_values()).unwrap();
                    holder.respond_offer(ex.cred_ex_id, accept).unwrap();
                    if accept {
                        issued.push(ex.cred_ex_id);
                    }
                }
                Step::Request { accept, attr } => {
                    let Some(conn) = verifier.connection_with(&holder) else { continue };
                    let req = verifier
                        .send_proof_request(conn, &cd.cred_def_id, &strings(&[attrs[attr]]), None)
                        .unwrap();
                    let decision = ProofDecision { accept, ..Default::default() };
                    // May fail with no usable credential; state stays put.
                    let _ = holder.respond_proof_request(req.pres_ex_id, &decision);
                }
                Step::Revoke { pick } => {
                    if !issued.is_empty() {
                        let id = issued.remove(pick % issued.len());
                        gov.revoke(id, true).unwrap();
                    }
                }
                Step::BrokenHandshake => {
                    verifier.faults.corrupt_challenge.store(true, Ordering::SeqCst);
                    let (_, url) = verifier.create_invitation(None).unwrap();
                    let _ = holder.receive_invitation_url(&url, true);
                    verifier.faults.corrupt_challenge.store(false, Ordering::SeqCst);
                }
            }
        }
        for agent in [&gov, &holder, &verifier] {
            assert_complete(agent);
        }
    }
}
