use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse};
use crate::domain::AgentRole;
use crate::error::GatewayError;

/// First 16 hex digits of the SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hex::encode(&hash[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub agent_role: AgentRole,
    pub request_id: String,
    pub model_id: String,
    pub prompt_digest: String,
    pub response_digest: Option<String>,
    pub status: TraceStatus,
    pub error: Option<String>,
    pub retries: u32,
    pub latency_ms: u64,
}

#[derive(Default)]
struct Inner {
    entries: Vec<TraceEntry>,
    sink: Option<File>,
}

/// Append-only log of gateway calls; optionally mirrored to a JSON-lines file.
#[derive(Clone, Default)]
pub struct TraceLog {
    inner: Arc<Mutex<Inner>>,
}

impl std::fmt::Debug for TraceLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceLog").field("len", &self.len()).finish()
    }
}

impl TraceLog {
    pub fn with_file(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { inner: Arc::new(Mutex::new(Inner { entries: Vec::new(), sink: Some(file) })) })
    }

    pub(crate) fn record(
        &self,
        request: &ChatRequest,
        result: &Result<ChatResponse, GatewayError>,
        retries: u32,
        elapsed: Duration,
    ) {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let entry = TraceEntry {
            seq: inner.entries.len() as u64,
            timestamp: Utc::now(),
            agent_role: request.metadata.agent_role,
            request_id: request.metadata.request_id.clone(),
            model_id: request.model_id.clone(),
            prompt_digest: digest(&request.transcript()),
            response_digest: result.as_ref().ok().map(|r| digest(&r.content)),
            status: if result.is_ok() { TraceStatus::Ok } else { TraceStatus::Error },
            error: result.as_ref().err().map(ToString::to_string),
            retries,
            latency_ms: elapsed.as_millis() as u64,
        };
        if let Some(sink) = inner.sink.as_mut() {
            if let Ok(line) = serde_json::to_string(&entry) {
                if let Err(e) = writeln!(sink, "{line}") {
                    tracing::warn!("trace sink write failed: {e}");
                }
            }
        }
        inner.entries.push(entry);
    }

    pub fn entries(&self) -> Vec<TraceEntry> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).entries.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries whose request id starts with `prefix`.
    pub fn for_request(&self, prefix: &str) -> Vec<TraceEntry> {
        self.entries().into_iter().filter(|e| e.request_id.starts_with(prefix)).collect()
    }
}
