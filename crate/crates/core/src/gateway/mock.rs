use std::path::Path;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{digest, ChatProvider, ChatRequest, ChatResponse, TokenUsage};
use crate::domain::AgentRole;
use crate::error::GatewayError;

/// One scripted reply. Every present matcher must match; the first matching
/// rule in the list wins.
///
/// `respond` may contain `{{hash}}` (a stable digest of the prompt) and
/// `{{pick:a|b|c}}` (one alternative chosen by that digest).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub role: Option<AgentRole>,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub not_contains: Option<String>,
    pub respond: String,
    #[serde(default)]
    pub delay_ms: u64,
}

impl MockRule {
    pub fn new(role: Option<AgentRole>, contains: Option<&str>, respond: impl Into<String>) -> Self {
        Self {
            role,
            contains: contains.map(Into::into),
            not_contains: None,
            respond: respond.into(),
            delay_ms: 0,
        }
    }

    pub fn for_role(role: AgentRole, respond: impl Into<String>) -> Self {
        Self::new(Some(role), None, respond)
    }

    pub fn unless(mut self, text: &str) -> Self {
        self.not_contains = Some(text.into());
        self
    }

    pub fn delayed(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    fn matches(&self, request: &ChatRequest, transcript: &str) -> bool {
        self.role.map_or(true, |r| r == request.metadata.agent_role)
            && self.contains.as_deref().map_or(true, |s| transcript.contains(s))
            && self.not_contains.as_deref().map_or(true, |s| !transcript.contains(s))
    }
}

pub const SHIPPED_SCRIPT: &str = include_str!("../../mock/default_script.json");

/// Deterministic offline provider driven by an ordered rule list.
#[derive(Debug, Clone)]
pub struct MockProvider {
    rules: Vec<MockRule>,
}

impl MockProvider {
    pub fn new(rules: Vec<MockRule>) -> Result<Self, GatewayError> {
        if rules.is_empty() {
            return Err(GatewayError::Config("mock provider needs at least one rule".into()));
        }
        Ok(Self { rules })
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        let rules: Vec<MockRule> = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("invalid mock script {}: {e}", path.display())))?;
        Self::new(rules)
    }

    /// The offline demo script bundled with the crate.
    pub fn shipped() -> Self {
        let rules: Vec<MockRule> = serde_json::from_str(SHIPPED_SCRIPT).expect("shipped mock script parses");
        Self { rules }
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }
}

fn render(template: &str, hash: &str) -> String {
    let seed = u64::from_str_radix(&hash[..8.min(hash.len())], 16).unwrap_or(0);
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return out;
        };
        let token = &after[..end];
        if token == "hash" {
            out.push_str(hash);
        } else if let Some(options) = token.strip_prefix("pick:") {
            let options: Vec<&str> = options.split('|').collect();
            out.push_str(options[(seed % options.len() as u64) as usize]);
        } else {
            out.push_str(&rest[start..start + 2 + end + 2]);
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    out
}

#[async_trait]
impl ChatProvider for MockProvider {
    async fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let transcript = request.transcript();
        let rule = self
            .rules
            .iter()
            .find(|rule| rule.matches(request, &transcript))
            .ok_or_else(|| GatewayError::MockScriptMiss { role: request.metadata.agent_role.as_str().to_string() })?;
        if rule.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(rule.delay_ms)).await;
        }
        let content = render(&rule.respond, &digest(&transcript));
        let prompt_tokens = transcript.split_whitespace().count() as u32;
        let completion_tokens = content.split_whitespace().count() as u32;
        Ok(ChatResponse {
            content,
            finish_reason: "stop".into(),
            token_usage: TokenUsage {
                prompt_tokens,
                completion_tokens,
                total_tokens: prompt_tokens + completion_tokens,
            },
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, Gateway, RequestMetadata};
    use std::sync::Arc;

    fn request(role: AgentRole, text: &str) -> ChatRequest {
        ChatRequest {
            model_id: "small".into(),
            messages: vec![ChatMessage::system("sys"), ChatMessage::user(text)],
            temperature: 0.0,
            max_tokens: 64,
            metadata: RequestMetadata { agent_role: role, request_id: "r".into() },
        }
    }

    #[tokio::test]
    async fn scripted_echo() {
        let mock = MockProvider::new(vec![MockRule::for_role(AgentRole::Validator, "APPROVE: fine")]).unwrap();
        let response = mock.send(&request(AgentRole::Validator, "x")).await.unwrap();
        assert_eq!(response.content, "APPROVE: fine");
    }

    #[tokio::test]
    async fn first_matching_rule_wins() {
        let mock = MockProvider::new(vec![
            MockRule::for_role(AgentRole::Validator, "NO: too revealing"),
            MockRule::new(None, Some("x"), "second"),
        ])
        .unwrap();
        assert_eq!(mock.send(&request(AgentRole::Validator, "x")).await.unwrap().content, "NO: too revealing");
        assert_eq!(mock.send(&request(AgentRole::Teacher, "x")).await.unwrap().content, "second");
    }

    #[tokio::test]
    async fn unmatched_role_is_a_script_miss() {
        let mock = MockProvider::new(vec![MockRule::for_role(AgentRole::Validator, "APPROVE")]).unwrap();
        let err = mock.send(&request(AgentRole::Teacher, "x")).await.unwrap_err();
        assert_eq!(err, GatewayError::MockScriptMiss { role: "teacher".into() });
    }

    #[test]
    fn empty_rule_list_is_rejected() {
        assert!(MockProvider::new(vec![]).is_err());
    }

    #[tokio::test]
    async fn slow_mock_times_out() {
        let mock = MockProvider::new(vec![MockRule::for_role(AgentRole::Teacher, "late").delayed(200)]).unwrap();
        let gateway = Gateway::new(Arc::new(mock)).with_timeout(Duration::from_millis(1));
        let err = gateway.complete(&request(AgentRole::Teacher, "x")).await.unwrap_err();
        assert_eq!(err, GatewayError::Timeout(1));
        assert_eq!(gateway.trace().len(), 1);
    }

    #[tokio::test]
    async fn identical_requests_get_identical_responses() {
        let mock = MockProvider::new(vec![MockRule::for_role(
            AgentRole::Teacher,
            "{{pick:Try again|Keep going|Almost there}} ({{hash}})",
        )])
        .unwrap();
        let a = mock.send(&request(AgentRole::Teacher, "same")).await.unwrap();
        let b = mock.send(&request(AgentRole::Teacher, "same")).await.unwrap();
        assert_eq!(a.content, b.content);
        assert!(!a.content.contains("{{"));
    }

    #[test]
    fn unknown_placeholders_are_left_alone() {
        assert_eq!(render("a {{other}} b", "00000001"), "a {{other}} b");
        assert_eq!(render("{{pick:x|y}}", "00000001"), "y");
    }

    #[test]
    fn rules_load_from_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.json");
        std::fs::write(&path, r#"[{"role":"validator","respond":"APPROVE"},{"contains":"hello","respond":"hi"}]"#).unwrap();
        let mock = MockProvider::from_file(&path).unwrap();
        assert_eq!(mock.rules().len(), 2);
    }
}
