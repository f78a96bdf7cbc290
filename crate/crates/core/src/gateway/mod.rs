//! Chat-completion client: one provider behind per-call timeouts, retries with
//! exponential backoff and a complete call trace.

mod mock;
mod remote;
mod trace;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::domain::AgentRole;
use crate::error::GatewayError;

pub use mock::{MockProvider, MockRule};
pub use remote::RemoteProvider;
pub use trace::{digest, TraceEntry, TraceLog, TraceStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMetadata {
    pub agent_role: AgentRole,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_tokens: u32,
    pub metadata: RequestMetadata,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("messages must not be empty")),
            Some(m) if m.role != ChatRole::System => {
                Err(GatewayError::InvalidRequest("first message must have role system"))
            }
            _ if !(0.0..=2.0).contains(&self.temperature) => {
                Err(GatewayError::InvalidRequest("temperature must be within [0, 2]"))
            }
            _ => Ok(()),
        }
    }

    /// All message contents joined; what mock rules and digests look at.
    pub fn transcript(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub total_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    pub token_usage: TokenUsage,
    pub latency_ms: u64,
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Strings that must never show up in traces or errors.
    fn secrets(&self) -> Vec<String> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, initial_backoff_ms: 250, max_backoff_ms: 8_000 }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// JSON file with the ordered mock rules; the shipped script when absent.
    #[serde(default)]
    pub mock_script: Option<std::path::PathBuf>,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl ProviderConfig {
    pub fn mock(script: impl Into<std::path::PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Mock,
            base_url: None,
            api_key_env: default_key_env(),
            timeout_ms: default_timeout_ms(),
            retry: RetryPolicy::default(),
            mock_script: Some(script.into()),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            ProviderKind::Remote if self.base_url.as_deref().map_or(true, str::is_empty) => {
                Err(GatewayError::Config("remote provider requires base_url".into()))
            }
            _ if self.timeout_ms == 0 => Err(GatewayError::Config("timeout_ms must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn build_provider(&self) -> Result<Arc<dyn ChatProvider>, GatewayError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Remote => Arc::new(RemoteProvider::from_config(self)?),
            ProviderKind::Mock => {
                match &self.mock_script {
                    Some(path) => Arc::new(MockProvider::from_file(path)?),
                    None => Arc::new(MockProvider::shipped()),
                }
            }
        })
    }
}

/// Thread-safe client used by every agent.
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    timeout: Duration,
    retry: RetryPolicy,
    trace: TraceLog,
    secrets: Vec<String>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("timeout", &self.timeout)
            .field("retry", &self.retry)
            .field("trace_entries", &self.trace.len())
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        let secrets = provider.secrets().into_iter().filter(|s| !s.is_empty()).collect();
        Self {
            provider,
            timeout: Duration::from_millis(default_timeout_ms()),
            retry: RetryPolicy::default(),
            trace: TraceLog::default(),
            secrets,
        }
    }

    pub fn from_config(config: &ProviderConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(config.build_provider()?)
            .with_timeout(Duration::from_millis(config.timeout_ms))
            .with_retry(config.retry))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_trace(mut self, trace: TraceLog) -> Self {
        self.trace = trace;
        self
    }

    pub fn trace(&self) -> &TraceLog {
        &self.trace
    }

    pub async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let mut retries = 0;
        let result = match request.validate() {
            Err(e) => Err(e),
            Ok(()) => loop {
                let attempt = match tokio::time::timeout(self.timeout, self.provider.send(request)).await {
                    Ok(result) => result,
                    Err(_) => Err(GatewayError::Timeout(self.timeout.as_millis() as u64)),
                };
                match attempt {
                    Err(e) if e.is_transient() && retries < self.retry.max_retries => {
                        tokio::time::sleep(self.retry.backoff(retries)).await;
                        retries += 1;
                    }
                    other => break other,
                }
            },
        };
        let result = result.map_err(|e| self.scrub_error(e));
        self.trace.record(request, &result, retries, started.elapsed());
        result
    }

    fn scrub(&self, text: &str) -> String {
        self.secrets.iter().fold(text.to_string(), |acc, secret| acc.replace(secret.as_str(), "***"))
    }

    fn scrub_error(&self, error: GatewayError) -> GatewayError {
        match error {
            GatewayError::Transport(m) => GatewayError::Transport(self.scrub(&m)),
            GatewayError::ProviderRefusal { status, body } => {
                GatewayError::ProviderRefusal { status, body: self.scrub(&body) }
            }
            GatewayError::Config(m) => GatewayError::Config(self.scrub(&m)),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn request(role: AgentRole, text: &str) -> ChatRequest {
        ChatRequest {
            model_id: "small".into(),
            messages: vec![ChatMessage::system("sys"), ChatMessage::user(text)],
            temperature: 0.0,
            max_tokens: 64,
            metadata: RequestMetadata { agent_role: role, request_id: "r1".into() },
        }
    }

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    #[async_trait]
    impl ChatProvider for Flaky {
        async fn send(&self, _request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(GatewayError::Transport("status 503".into()))
            } else {
                Ok(ChatResponse {
                    content: "ok".into(),
                    finish_reason: "stop".into(),
                    token_usage: TokenUsage::default(),
                    latency_ms: 0,
                })
            }
        }
    }

    fn fast_retry(max_retries: u32) -> RetryPolicy {
        RetryPolicy { max_retries, initial_backoff_ms: 1, max_backoff_ms: 4 }
    }

    #[tokio::test]
    async fn transient_errors_are_retried() {
        let gateway = Gateway::new(Arc::new(Flaky { failures: 2, calls: AtomicU32::new(0) })).with_retry(fast_retry(3));
        let response = gateway.complete(&request(AgentRole::Teacher, "hi")).await.unwrap();
        assert_eq!(response.content, "ok");
        let entries = gateway.trace().entries();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].retries, 2);
    }

    #[tokio::test]
    async fn retries_are_bounded() {
        let gateway = Gateway::new(Arc::new(Flaky { failures: 10, calls: AtomicU32::new(0) })).with_retry(fast_retry(2));
        let err = gateway.complete(&request(AgentRole::Teacher, "hi")).await.unwrap_err();
        assert!(matches!(err, GatewayError::Transport(_)));
        assert_eq!(gateway.trace().entries()[0].status, TraceStatus::Error);
    }

    #[tokio::test]
    async fn invalid_requests_are_traced_failures() {
        let gateway = Gateway::new(Arc::new(Flaky { failures: 0, calls: AtomicU32::new(0) }));
        let mut req = request(AgentRole::Teacher, "hi");
        req.messages.remove(0);
        assert!(matches!(gateway.complete(&req).await, Err(GatewayError::InvalidRequest(_))));
        req.messages.clear();
        assert!(gateway.complete(&req).await.is_err());
        assert_eq!(gateway.trace().len(), 2);
    }

    #[test]
    fn backoff_grows_exponentially_and_caps() {
        let policy = RetryPolicy { max_retries: 5, initial_backoff_ms: 100, max_backoff_ms: 500 };
        let ms: Vec<u128> = (0..5).map(|k| policy.backoff(k).as_millis()).collect();
        assert_eq!(ms, vec![100, 200, 400, 500, 500]);
    }

    #[test]
    fn provider_config_requires_its_source() {
        let mut cfg = ProviderConfig::mock("rules.json");
        assert!(cfg.validate().is_ok());
        cfg.mock_script = None;
        assert!(cfg.validate().is_ok());
        cfg.timeout_ms = 0;
        assert!(cfg.validate().is_err());
        cfg.timeout_ms = 1_000;
        cfg.kind = ProviderKind::Remote;
        assert!(cfg.validate().is_err());
        cfg.base_url = Some("http://localhost:1".into());
        assert!(cfg.validate().is_ok());
    }
}
