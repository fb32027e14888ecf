//! Envelope delivery between agents and inbound replay protection.
//!
//! Delivery is synchronous: `send` returns once the recipient has processed
//! the envelope, carrying back the recipient's error if it rejected it.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::time::Duration;

use bdimhs_core::crypto::{Nonce, SealedEnvelope};

use crate::error::AgentError;

pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &str, envelope: &SealedEnvelope) -> Result<(), AgentError>;
}

/// Anything that can process an inbound envelope.
pub trait Inbox: Send + Sync {
    fn receive(&self, envelope: SealedEnvelope) -> Result<(), AgentError>;
}

/// In-process delivery keyed by endpoint string, with an optional tap that
/// records every envelope for capture-and-resend tests.
#[derive(Default)]
pub struct LocalTransport {
    routes: RwLock<HashMap<String, Weak<dyn Inbox>>>,
    capture: AtomicBool,
    captured: Mutex<Vec<(String, SealedEnvelope)>>,
    down: RwLock<Vec<String>>,
}

impl LocalTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(&self, endpoint: &str, inbox: Arc<dyn Inbox>) {
        self.routes
            .write()
            .unwrap()
            .insert(endpoint.to_owned(), Arc::downgrade(&inbox));
    }

    pub fn set_capture(&self, on: bool) {
        self.capture.store(on, Ordering::SeqCst);
    }

    pub fn captured(&self) -> Vec<(String, SealedEnvelope)> {
        self.captured.lock().unwrap().clone()
    }

    pub fn clear_captured(&self) {
        self.captured.lock().unwrap().clear();
    }

    /// Simulates an unreachable endpoint.
    pub fn set_down(&self, endpoint: &str, down: bool) {
        let mut list = self.down.write().unwrap();
        list.retain(|e| e != endpoint);
        if down {
            list.push(endpoint.to_owned());
        }
    }
}

impl Transport for LocalTransport {
    fn send(&self, endpoint: &str, envelope: &SealedEnvelope) -> Result<(), AgentError> {
        if self.down.read().unwrap().iter().any(|e| e == endpoint) {
            return Err(AgentError::Transport(format!("{endpoint} unreachable")));
        }
        let inbox = self
            .routes
            .read()
            .unwrap()
            .get(endpoint)
            .and_then(Weak::upgrade)
            .ok_or_else(|| AgentError::Transport(format!("no agent at {endpoint}")))?;
        if self.capture.load(Ordering::SeqCst) {
            self.captured
                .lock()
                .unwrap()
                .push((endpoint.to_owned(), envelope.clone()));
        }
        inbox.receive(envelope.clone())
    }
}

/// HTTP POST of the envelope JSON to the peer's service endpoint.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(5))
                .timeout(Duration::from_secs(120))
                .build(),
        }
    }
}

impl HttpTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn post(&self, endpoint: &str, envelope: &SealedEnvelope) -> Result<(), PostError> {
        match self.agent.post(endpoint).send_json(envelope) {
            Ok(_) => Ok(()),
            Err(ureq::Error::Status(status, response)) => {
                let body = response.into_string().unwrap_or_default();
                Err(PostError::Rejected(
                    serde_json::from_str(&body)
                        .unwrap_or_else(|_| AgentError::Transport(format!("HTTP {status}: {body}"))),
                ))
            }
            Err(ureq::Error::Transport(t)) => Err(PostError::Io(t.to_string())),
        }
    }
}

enum PostError {
    Rejected(AgentError),
    Io(String),
}

impl Transport for HttpTransport {
    /// One resend of the identical envelope on I/O failure. If the first
    /// copy did arrive, the recipient's replay guard drops the second.
    fn send(&self, endpoint: &str, envelope: &SealedEnvelope) -> Result<(), AgentError> {
        match self.post(endpoint, envelope) {
            Ok(()) => Ok(()),
            Err(PostError::Rejected(e)) => Err(e),
            Err(PostError::Io(_)) => match self.post(endpoint, envelope) {
                Ok(()) => Ok(()),
                Err(PostError::Rejected(e)) => Err(e),
                Err(PostError::Io(msg)) => Err(AgentError::Transport(msg)),
            },
        }
    }
}

/// Tracks (sender key, nonce) pairs inside the timestamp window.
#[derive(Debug, Default)]
pub struct ReplayGuard {
    seen: HashMap<([u8; 32], Nonce), u64>,
    last_sweep: u64,
}

impl ReplayGuard {
    pub fn check_and_mark(
        &mut self,
        sender: &[u8; 32],
        nonce: &Nonce,
        timestamp: u64,
        now: u64,
        window_ms: u64,
    ) -> Result<(), AgentError> {
        if now.abs_diff(timestamp) > window_ms {
            return Err(AgentError::ReplayRejected(format!(
                "timestamp {timestamp} outside the {window_ms} ms window"
            )));
        }
        if now.saturating_sub(self.last_sweep) > window_ms {
            // Entries this old fail the window check on their own.
            self.seen.retain(|_, ts| now.saturating_sub(*ts) <= window_ms);
            self.last_sweep = now;
        }
        if self.seen.insert((*sender, *nonce), timestamp).is_some() {
            return Err(AgentError::ReplayRejected("envelope nonce already seen".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}
