#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use chrono::Utc;
use pedafeed_core::agents::{AgentSettings, Agents, TemplateSet};
use pedafeed_core::domain::{AgentRole, HelpRequest, MasteryLevel, RequestSnapshot, Task, TaskSet};
use pedafeed_core::error::GatewayError;
use pedafeed_core::gateway::{ChatProvider, ChatRequest, ChatResponse, Gateway, MockProvider, RetryPolicy, TokenUsage};
use pedafeed_core::pipeline::Pipeline;
use pedafeed_core::quorum::QuorumConfig;
use pedafeed_core::runner::Sandbox;
use pedafeed_core::tasks::shipped_tasks;

type Reply = dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync;

/// Provider driven by a closure; records every request it sees.
pub struct FnProvider {
    reply: Box<Reply>,
    pub seen: Mutex<Vec<ChatRequest>>,
}

impl FnProvider {
    pub fn new(reply: impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static) -> Arc<Self> {
        Arc::new(Self { reply: Box::new(reply), seen: Mutex::new(Vec::new()) })
    }

    pub fn requests(&self, role: AgentRole) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().iter().filter(|r| r.metadata.agent_role == role).cloned().collect()
    }
}

#[async_trait]
impl ChatProvider for FnProvider {
    async fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.seen.lock().unwrap().push(request.clone());
        let content = (self.reply)(request)?;
        Ok(ChatResponse { content, finish_reason: "stop".into(), token_usage: TokenUsage::default(), latency_ms: 0 })
    }
}

pub fn fast_retry() -> RetryPolicy {
    RetryPolicy { max_retries: 1, initial_backoff_ms: 1, max_backoff_ms: 1 }
}

pub fn agents_with(provider: Arc<dyn ChatProvider>) -> Agents {
    let gateway = Gateway::new(provider).with_retry(fast_retry());
    Agents::new(Arc::new(gateway), Arc::new(TemplateSet::english()), AgentSettings::default())
}

pub fn shipped_agents() -> Agents {
    agents_with(Arc::new(MockProvider::shipped()))
}

pub fn task(id: &str) -> Task {
    shipped_tasks().into_iter().find(|t| t.id == id).expect("shipped task")
}

pub fn task_set() -> Arc<TaskSet> {
    Arc::new(TaskSet::new(shipped_tasks()).unwrap())
}

pub fn snapshot(task_id: &str, source: &str, question: Option<&str>, mastery: MasteryLevel, help_count: u32) -> RequestSnapshot {
    RequestSnapshot {
        student_id: "student-1".into(),
        task_id: task_id.into(),
        source_code: source.into(),
        text_input: question.map(Into::into),
        mastery,
        help_count,
        timestamp: Utc::now(),
    }
}

pub fn request(task_id: &str, source: &str, question: Option<&str>, mastery: MasteryLevel, help_count: u32) -> HelpRequest {
    task_set().bind(snapshot(task_id, source, question, mastery, help_count)).unwrap()
}

/// 1-based reviewer index parsed from a validator prompt.
pub fn reviewer_index(request: &ChatRequest) -> u32 {
    let text = request.transcript();
    let at = text.find("reviewer ").expect("validator prompt names the reviewer") + "reviewer ".len();
    text[at..].split_whitespace().next().unwrap().parse().unwrap()
}

pub fn pipeline(agents: Agents) -> Pipeline {
    Pipeline::new(task_set(), Arc::new(Sandbox::default()), agents, QuorumConfig::default())
}
