use std::time::Instant;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, ChatResponse, ProviderConfig, TokenUsage};
use crate::error::GatewayError;

const MAX_ERROR_BODY: usize = 512;

/// Any endpoint speaking the chat-completions HTTP/JSON protocol.
pub struct RemoteProvider {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("endpoint", &self.endpoint)
            .field("has_api_key", &self.api_key.is_some())
            .finish()
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

impl RemoteProvider {
    pub fn new(base_url: &str, api_key: Option<String>) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| GatewayError::Config(format!("cannot build HTTP client: {e}")))?;
        let base = base_url.trim_end_matches('/');
        Ok(Self {
            client,
            endpoint: format!("{base}/chat/completions"),
            api_key: api_key.filter(|k| !k.is_empty()),
        })
    }

    pub fn from_config(config: &ProviderConfig) -> Result<Self, GatewayError> {
        let base = config
            .base_url
            .as_deref()
            .ok_or_else(|| GatewayError::Config("remote provider requires base_url".into()))?;
        Self::new(base, std::env::var(&config.api_key_env).ok())
    }
}

fn truncate(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

#[async_trait]
impl ChatProvider for RemoteProvider {
    async fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().await.map_err(|e| GatewayError::Transport(e.without_url().to_string()))?;
        let status = response.status();
        let text = response.text().await.map_err(|e| GatewayError::Transport(e.without_url().to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(GatewayError::Transport(format!("status {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(GatewayError::ProviderRefusal {
                status: status.as_u16(),
                body: truncate(&text, MAX_ERROR_BODY).to_string(),
            });
        }
        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Transport(format!("malformed completion body: {e}")))?;
        let choice = wire.choices.into_iter().next();
        let finish_reason = choice.as_ref().and_then(|c| c.finish_reason.clone()).unwrap_or_default();
        let content = choice.and_then(|c| c.message.content).unwrap_or_default();
        if content.trim().is_empty() {
            return Err(GatewayError::ProviderRefusal { status: status.as_u16(), body: "empty completion".into() });
        }
        Ok(ChatResponse {
            content,
            finish_reason,
            token_usage: wire.usage.unwrap_or_default(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn secrets(&self) -> Vec<String> {
        self.api_key.iter().cloned().collect()
    }
}
