//! The LLM agents of the pipeline: exploitation detector, expert programmer,
//! scenario-specific teachers and pedagogical validators.
//!
//! Prompt construction is pure (see [`prompts`]); [`Agents`] sends the
//! resulting bundles through the [`Gateway`] and parses the replies.

pub mod parse;
pub mod policy;
pub mod prompts;
pub mod templates;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentCall, AgentRole, HelpRequest, Scenario, Task};
use crate::error::AgentError;
use crate::gateway::{digest, ChatMessage, ChatRequest, Gateway, RequestMetadata};
use crate::runner::{Overall, TestReport};

pub use prompts::{
    build_exploit_prompt, build_expert_prompt, build_teacher_prompt, build_validator_prompt, TeacherInputs,
};
pub use templates::{TemplateKey, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "agent", rename_all = "snake_case")]
pub enum PromptRole {
    ExploitDetector,
    ExpertProgrammer,
    Teacher(Scenario),
    Validator,
}

impl PromptRole {
    pub fn agent_role(&self) -> AgentRole {
        match self {
            PromptRole::ExploitDetector => AgentRole::ExploitDetector,
            PromptRole::ExpertProgrammer => AgentRole::ExpertProgrammer,
            PromptRole::Teacher(_) => AgentRole::Teacher,
            PromptRole::Validator => AgentRole::Validator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role: PromptRole,
    pub system_text: String,
    pub user_text: String,
    pub locale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fundamental,
    Minor,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Fundamental => "fundamental",
            Severity::Minor => "minor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub location: String,
    pub defect: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub findings: Vec<Finding>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploitVerdict {
    pub exploit: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorVerdict {
    pub approved: bool,
    pub critique: String,
    pub parse_fallback: bool,
}

/// One earlier question/answer pair in a student's session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub question: Option<String>,
    pub response: String,
}

/// Model routing and sampling defaults per agent role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSettings {
    pub large_model: String,
    pub small_model: String,
    pub teacher_temperature: f32,
    pub expert_temperature: f32,
    pub validator_temperature: f32,
    pub detector_temperature: f32,
    pub max_tokens: u32,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            large_model: "gpt-4o".into(),
            small_model: "gpt-4o-mini".into(),
            teacher_temperature: 0.7,
            expert_temperature: 0.0,
            validator_temperature: 0.0,
            detector_temperature: 0.0,
            max_tokens: 800,
        }
    }
}

const REFORMAT_INSTRUCTION: &str = "Your previous answer did not follow the required format. Rewrite it using only \
    `FINDING | <location hint> | <fundamental or minor> | <defect description>` lines followed by one `SUMMARY:` line.";

#[derive(Debug, Clone)]
pub struct Agents {
    gateway: Arc<Gateway>,
    templates: Arc<TemplateSet>,
    settings: AgentSettings,
}

impl Agents {
    pub fn new(gateway: Arc<Gateway>, templates: Arc<TemplateSet>, settings: AgentSettings) -> Self {
        Self { gateway, templates, settings }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn chat_request(&self, bundle: &PromptBundle, extra: Vec<ChatMessage>, request_id: &str) -> ChatRequest {
        let (model, temperature) = match bundle.role {
            PromptRole::Teacher(_) => (&self.settings.large_model, self.settings.teacher_temperature),
            PromptRole::ExpertProgrammer => (&self.settings.large_model, self.settings.expert_temperature),
            PromptRole::Validator => (&self.settings.small_model, self.settings.validator_temperature),
            PromptRole::ExploitDetector => (&self.settings.small_model, self.settings.detector_temperature),
        };
        let mut messages = vec![ChatMessage::system(&bundle.system_text), ChatMessage::user(&bundle.user_text)];
        messages.extend(extra);
        ChatRequest {
            model_id: model.clone(),
            messages,
            temperature,
            max_tokens: self.settings.max_tokens,
            metadata: RequestMetadata { agent_role: bundle.role.agent_role(), request_id: request_id.to_string() },
        }
    }

    async fn call(
        &self,
        bundle: &PromptBundle,
        extra: Vec<ChatMessage>,
        request_id: &str,
    ) -> Result<(String, AgentCall), AgentError> {
        let request = self.chat_request(bundle, extra, request_id);
        let response = self.gateway.complete(&request).await?;
        let call = AgentCall {
            role: bundle.role.agent_role(),
            prompt_digest: digest(&request.transcript()),
            response_digest: digest(&response.content),
        };
        Ok((response.content, call))
    }

    /// Requests without a question are never treated as exploitation and skip
    /// the model call.
    pub async fn detect_exploitation(
        &self,
        request: &HelpRequest,
        task: &Task,
        request_id: &str,
    ) -> Result<(ExploitVerdict, Option<AgentCall>), AgentError> {
        if request.question().is_none() {
            return Ok((ExploitVerdict { exploit: false, reason: "no text input".into() }, None));
        }
        let bundle = build_exploit_prompt(&self.templates, request, task);
        let (text, call) = self.call(&bundle, Vec::new(), request_id).await?;
        Ok((parse::parse_exploit_verdict(&text), Some(call)))
    }

    /// Expert analysis of a failing attempt, retried once with a reformat
    /// instruction when the delimited format is not recognised.
    pub async fn analyze_errors(
        &self,
        attempt: &str,
        task: &Task,
        report: &TestReport,
        request_id: &str,
    ) -> Result<(ErrorAnalysis, Vec<AgentCall>), AgentError> {
        if report.overall == Overall::AllPassed {
            return Err(AgentError::NothingToAnalyze);
        }
        let bundle = build_expert_prompt(&self.templates, attempt, task, report);
        let (text, first) = self.call(&bundle, Vec::new(), request_id).await?;
        let mut calls = vec![first];
        let analysis = match parse::parse_analysis(&text) {
            Some(analysis) => analysis,
            None => {
                let extra = vec![ChatMessage::assistant(text), ChatMessage::user(REFORMAT_INSTRUCTION)];
                let (retry, call) = self.call(&bundle, extra, request_id).await?;
                calls.push(call);
                parse::parse_analysis(&retry).ok_or_else(|| AgentError::Parse(retry.chars().take(200).collect()))?
            }
        };
        Ok((enforce_compile_finding(analysis, report), calls))
    }

    pub async fn generate(&self, bundle: &PromptBundle, request_id: &str) -> Result<(String, AgentCall), AgentError> {
        self.call(bundle, Vec::new(), request_id).await
    }

    pub async fn validate(
        &self,
        bundle: &PromptBundle,
        request_id: &str,
    ) -> Result<(ValidatorVerdict, AgentCall), AgentError> {
        let (text, call) = self.call(bundle, Vec::new(), request_id).await?;
        Ok((parse::parse_validator_verdict(&text), call))
    }
}

fn mentions_compile_failure(text: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    ["syntax", "compile", "indentation", "parse"].iter().any(|w| lower.contains(w))
}

/// Compile failures are always fundamental and always reported.
fn enforce_compile_finding(mut analysis: ErrorAnalysis, report: &TestReport) -> ErrorAnalysis {
    if report.compile_ok {
        return analysis;
    }
    let mut mentioned = false;
    for finding in analysis.findings.iter_mut().filter(|f| mentions_compile_failure(&f.defect)) {
        finding.severity = Severity::Fundamental;
        mentioned = true;
    }
    if !mentioned {
        let message = report.compile_message.clone().unwrap_or_else(|| "syntax error".into());
        analysis.findings.insert(
            0,
            Finding {
                location: "whole file".into(),
                defect: format!("The code does not compile: {message}"),
                severity: Severity::Fundamental,
            },
        );
    }
    analysis
}
