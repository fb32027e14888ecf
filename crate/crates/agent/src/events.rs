//! Webhook events: an in-memory history, a broadcast feed for the SSE
//! endpoint, and an optional outbound POST to a controller URL.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Duration;

use bdimhs_core::crypto::now_ms;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::broadcast;
use uuid::Uuid;

const HISTORY_LIMIT: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Connections,
    IssueCredential,
    PresentProof,
    Revocation,
}

impl Topic {
    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Connections => "connections",
            Topic::IssueCredential => "issue_credential",
            Topic::PresentProof => "present_proof",
            Topic::Revocation => "revocation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WebhookEvent {
    /// Per-agent emission counter.
    pub seq: u64,
    pub topic: Topic,
    pub record_id: Uuid,
    pub new_state: String,
    pub timestamp: u64,
    pub payload: Value,
}

pub struct EventBus {
    seq: AtomicU64,
    history: Mutex<VecDeque<WebhookEvent>>,
    feed: broadcast::Sender<WebhookEvent>,
    outbound: Mutex<Option<mpsc::Sender<WebhookEvent>>>,
}

impl Default for EventBus {
    fn default() -> Self {
        EventBus {
            seq: AtomicU64::new(0),
            history: Mutex::new(VecDeque::new()),
            feed: broadcast::channel(1024).0,
            outbound: Mutex::new(None),
        }
    }
}

impl EventBus {
    /// Records and fans out one event. Callers hold the lock of the record
    /// that changed, so per-record order is preserved.
    pub fn emit(&self, topic: Topic, record_id: Uuid, new_state: &str, payload: Value) {
        let mut history = self.history.lock().unwrap();
        let event = WebhookEvent {
            seq: self.seq.fetch_add(1, Ordering::SeqCst),
            topic,
            record_id,
            new_state: new_state.to_owned(),
            timestamp: now_ms(),
            payload,
        };
        if history.len() == HISTORY_LIMIT {
            history.pop_front();
        }
        history.push_back(event.clone());
        let _ = self.feed.send(event.clone());
        if let Some(tx) = self.outbound.lock().unwrap().as_ref() {
            let _ = tx.send(event);
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<WebhookEvent> {
        self.feed.subscribe()
    }

    pub fn history(&self) -> Vec<WebhookEvent> {
        self.history.lock().unwrap().iter().cloned().collect()
    }

    pub fn for_record(&self, record_id: Uuid) -> Vec<WebhookEvent> {
        self.history
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.record_id == record_id)
            .cloned()
            .collect()
    }

    /// Starts POSTing every event to `{url}/topic/{topic}/`.
    pub fn set_webhook_url(&self, url: &str) {
        let (tx, rx) = mpsc::channel::<WebhookEvent>();
        let base = url.trim_end_matches('/').to_owned();
        std::thread::Builder::new()
            .name("webhook".into())
            .spawn(move || {
                let agent = ureq::AgentBuilder::new()
                    .timeout(Duration::from_secs(5))
                    .build();
                for event in rx {
                    let target = format!("{base}/topic/{}/", event.topic.as_str());
                    if let Err(err) = agent.post(&target).send_json(&event) {
                        log::warn!("webhook POST to {target} failed: {err}");
                    }
                }
            })
            .expect("spawn webhook thread");
        *self.outbound.lock().unwrap() = Some(tx);
    }
}
