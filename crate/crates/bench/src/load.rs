use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use bdimhs_agent::client::{connect, AdminClient, ClientError};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::net::{pid_values, Targets, PID_ATTRS};
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    ConnectionInvitation,
    RegisterSchema,
    IssueCredential,
    SendProofRequest,
    PresentProof,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::ConnectionInvitation,
        Scenario::RegisterSchema,
        Scenario::IssueCredential,
        Scenario::SendProofRequest,
        Scenario::PresentProof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ConnectionInvitation => "CONNECTION_INVITATION",
            Scenario::RegisterSchema => "REGISTER_SCHEMA",
            Scenario::IssueCredential => "ISSUE_CREDENTIAL",
            Scenario::SendProofRequest => "SEND_PROOF_REQUEST",
            Scenario::PresentProof => "PRESENT_PROOF",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|s| s.name().to_lowercase().replace('_', "-")).join(", ")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts `ISSUE_CREDENTIAL`, `issue-credential` and the short `issue`.
impl FromStr for Scenario {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_uppercase().replace('-', "_");
        let short = match norm.as_str() {
            "CONNECTION" | "INVITATION" => Some(Scenario::ConnectionInvitation),
            "SCHEMA" => Some(Scenario::RegisterSchema),
            "ISSUE" => Some(Scenario::IssueCredential),
            "PROOF_REQUEST" | "REQUEST" => Some(Scenario::SendProofRequest),
            "PRESENT" | "PROOF" => Some(Scenario::PresentProof),
            _ => None,
        };
        short
            .or_else(|| Self::ALL.into_iter().find(|sc| sc.name() == norm))
            .ok_or_else(|| BenchError::UnknownScenario(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Sequential,
    Concurrent,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "SEQUENTIAL",
            Mode::Concurrent => "CONCURRENT",
        })
    }
}

impl FromStr for Mode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_uppercase().as_str() {
            "SEQUENTIAL" | "SEQ" => Ok(Mode::Sequential),
            "CONCURRENT" | "CONC" => Ok(Mode::Concurrent),
            _ => Err(BenchError::InvalidProfile(format!("mode {s:?}; expected sequential or concurrent"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoadProfile {
    pub scenario: Scenario,
    pub n_requests: usize,
    pub rampup_seconds: u64,
    pub mode: Mode,
}

impl LoadProfile {
    pub fn new(scenario: Scenario, n_requests: usize, rampup_seconds: u64, mode: Mode) -> Self {
        LoadProfile {
            scenario,
            n_requests,
            rampup_seconds,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_requests == 0 {
            return Err(BenchError::InvalidProfile("nRequests must be at least 1".into()));
        }
        Ok(())
    }

    /// Start offset of worker `k`: `k * rampup / W`, where W is 1 in
    /// sequential mode and `n_requests` in concurrent mode.
    pub fn start_offset(&self, k: usize) -> Duration {
        match self.mode {
            Mode::Sequential => Duration::ZERO,
            Mode::Concurrent => {
                Duration::from_secs(self.rampup_seconds).mul_f64(k as f64 / self.n_requests as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Sample {
    pub index: usize,
    /// Offset from the start of the run.
    pub start_ms: f64,
    pub latency_ms: f64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub n_requests: usize,
    pub mode: Mode,
    pub rampup_s: u64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub avg_ms: f64,
    pub stddev: f64,
    pub throughput_rps: f64,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub report: MetricsReport,
    pub samples: Vec<Sample>,
}

/// Population statistics over the successful samples.
pub fn summarize(profile: &LoadProfile, samples: &[Sample], wall: Duration) -> MetricsReport {
    let ok: Vec<f64> = samples.iter().filter(|s| s.ok).map(|s| s.latency_ms).collect();
    let n = ok.len() as f64;
    let (min, max, avg, stddev) = if ok.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let min = ok.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = (ok.iter().sum::<f64>() / n).clamp(min, max);
        let var = ok.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / n;
        (min, max, avg, var.sqrt())
    };
    let secs = wall.as_secs_f64();
    MetricsReport {
        scenario: profile.scenario,
        n_requests: profile.n_requests,
        mode: profile.mode,
        rampup_s: profile.rampup_seconds,
        min_ms: min,
        max_ms: max,
        avg_ms: avg,
        stddev,
        throughput_rps: if secs > 0.0 { n / secs } else { 0.0 },
        errors: samples.len() - ok.len(),
    }
}

type Op = Box<dyn Fn(usize) -> Result<(), ClientError> + Send + Sync>;

/// Per-scenario setup outside the timed region; returns the timed call.
fn prepare(scenario: Scenario, t: &Targets) -> Result<Op, BenchError> {
    let setup = |e: ClientError| BenchError::Setup(format!("{scenario}: {e}"));
    Ok(match scenario {
        Scenario::ConnectionInvitation => {
            let (inviter, invitee) = (t.issuer.clone(), t.holder.clone());
            Box::new(move |_| connect(&inviter, &invitee).map(|_| ()))
        }
        Scenario::RegisterSchema => {
            let issuer = t.issuer.clone();
            let tag = Uuid::new_v4().simple().to_string();
            Box::new(move |k| {
                issuer
                    .register_schema(&format!("bench-{}-{k}", &tag[..8]), "1.0", &PID_ATTRS)
                    .map(|_| ())
            })
        }
        Scenario::IssueCredential => {
            let (conn, _) = connect(&t.issuer, &t.holder).map_err(setup)?;
            let (issuer, cred_def_id) = (t.issuer.clone(), t.cred_def_id.clone());
            let values = pid_values();
            Box::new(move |_| {
                let offer = issuer.send_offer(&conn, &cred_def_id, &values)?;
                let id = offer["credExId"].as_str().unwrap_or_default();
                expect_state(&issuer, &format!("/issue-credential/records/{id}"), "ACKED")
            })
        }
        Scenario::SendProofRequest => {
            let (conn, _) = connect(&t.verifier, &t.recipient).map_err(setup)?;
            let (verifier, cred_def_id) = (t.verifier.clone(), t.cred_def_id.clone());
            Box::new(move |_| verifier.send_proof_request(&conn, &cred_def_id, &["fullName"]).map(|_| ()))
        }
        Scenario::PresentProof => {
            ensure_credential(t).map_err(setup)?;
            let (conn, _) = connect(&t.verifier, &t.holder).map_err(setup)?;
            let (verifier, cred_def_id) = (t.verifier.clone(), t.cred_def_id.clone());
            Box::new(move |_| {
                let req = verifier.send_proof_request(&conn, &cred_def_id, &["fullName", "licenseNumber"])?;
                let id = req["presExId"].as_str().unwrap_or_default();
                expect_state(&verifier, &format!("/present-proof/records/{id}"), "VERIFIED_TRUE")
            })
        }
    })
}

fn expect_state(client: &AdminClient, path: &str, want: &str) -> Result<(), ClientError> {
    let record = client.get(path)?;
    if record["state"] == want {
        Ok(())
    } else {
        Err(ClientError::Decode(format!("state {} instead of {want}", record["state"])))
    }
}

fn ensure_credential(t: &Targets) -> Result<(), ClientError> {
    let held = t.holder.get("/credentials")?;
    let has = held
        .as_array()
        .is_some_and(|cs| cs.iter().any(|c| c["credential"]["credDefId"] == t.cred_def_id.as_str() && c["revoked"] == false));
    if !has {
        let (conn, _) = connect(&t.issuer, &t.holder)?;
        t.issuer.send_offer(&conn, &t.cred_def_id, &pid_values())?;
    }
    Ok(())
}

fn targets_for(scenario: Scenario, t: &Targets) -> Vec<&AdminClient> {
    match scenario {
        Scenario::ConnectionInvitation | Scenario::IssueCredential => vec![&t.issuer, &t.holder],
        Scenario::RegisterSchema => vec![&t.issuer],
        Scenario::SendProofRequest => vec![&t.verifier, &t.recipient],
        Scenario::PresentProof => vec![&t.issuer, &t.verifier, &t.holder],
    }
}

/// Drives exactly `n_requests` timed calls against the targets.
pub fn run(profile: &LoadProfile, targets: &Targets) -> Result<BenchRun, BenchError> {
    profile.validate()?;
    for target in targets_for(profile.scenario, targets) {
        target.status().map_err(|_| BenchError::TargetDown(target.base().to_owned()))?;
    }
    let op = prepare(profile.scenario, targets)?;
    let samples = Mutex::new(Vec::with_capacity(profile.n_requests));
    let started = Instant::now();
    let timed = |k: usize| {
        let t0 = Instant::now();
        let result = op(k);
        let latency = t0.elapsed();
        samples.lock().unwrap().push(Sample {
            index: k,
            start_ms: (t0 - started).as_secs_f64() * 1e3,
            latency_ms: latency.as_secs_f64() * 1e3,
            ok: result.is_ok(),
            error: result.err().map(|e| e.to_string()),
        });
    };
    match profile.mode {
        Mode::Sequential => (0..profile.n_requests).for_each(timed),
        Mode::Concurrent => std::thread::scope(|s| {
            for k in 0..profile.n_requests {
                let timed = &timed;
                let at = started + profile.start_offset(k);
                s.spawn(move || {
                    std::thread::sleep(at.saturating_duration_since(Instant::now()));
                    timed(k)
                });
            }
        }),
    }
    let wall = started.elapsed();
    let mut samples = samples.into_inner().unwrap();
    samples.sort_by_key(|s| s.index);
    Ok(BenchRun {
        report: summarize(profile, &samples, wall),
        samples,
    })
}
