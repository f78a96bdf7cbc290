//! One help request from snapshot to delivered message.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::prompts::{refusal_message, safe_hint};
use crate::agents::{Agents, ErrorAnalysis, Exchange, ExploitVerdict, TeacherInputs};
use crate::domain::{FeedbackMessage, RequestSnapshot, Scenario, TaskSet};
use crate::error::{DomainError, PipelineError};
use crate::quorum::{run_quorum, IterationRecord, QuorumConfig};
use crate::router::route_checked;
use crate::runner::{is_attempt, Sandbox, TestReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub request_id: String,
    pub scenario: Scenario,
    pub message: FeedbackMessage,
    pub report: Option<TestReport>,
    pub exploit: ExploitVerdict,
    pub analysis: Option<ErrorAnalysis>,
    pub quorum_history: Vec<IterationRecord>,
    pub exhausted: bool,
    /// The unvalidated candidate was replaced by the generic hint.
    pub safe_hint_used: bool,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub tasks: Arc<TaskSet>,
    pub sandbox: Arc<Sandbox>,
    pub agents: Agents,
    pub quorum: QuorumConfig,
    pub strict: bool,
}

impl Pipeline {
    pub fn new(tasks: Arc<TaskSet>, sandbox: Arc<Sandbox>, agents: Agents, quorum: QuorumConfig) -> Self {
        Self { tasks, sandbox, agents, quorum, strict: false }
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    /// Runs the task's tests against `source` without any feedback.
    pub async fn run(&self, task_id: &str, source: &str) -> Result<TestReport, PipelineError> {
        let task = self.tasks.get(task_id).ok_or_else(|| DomainError::UnknownTask(task_id.to_string()))?;
        Ok(self.sandbox.run_attempt(source, &task.test_suite).await?)
    }

    /// Full pipeline. `snapshot.help_count` must already include this request.
    pub async fn handle(
        &self,
        snapshot: RequestSnapshot,
        history: &[Exchange],
        request_id: &str,
        quorum: Option<&QuorumConfig>,
    ) -> Result<PipelineOutcome, PipelineError> {
        let request = self.tasks.bind(snapshot)?;
        let task = self.tasks.get(request.task_id()).expect("bind checks the task");

        let report = if is_attempt(request.source_code(), &task.starter_code) {
            Some(self.sandbox.run_attempt(request.source_code(), &task.test_suite).await?)
        } else {
            None
        };
        let (exploit, exploit_call) = self.agents.detect_exploitation(&request, task, request_id).await?;
        let scenario = route_checked(&request, &task.starter_code, report.as_ref(), exploit.exploit)?;
        let mut upstream: Vec<_> = exploit_call.into_iter().collect();

        if scenario == Scenario::Exploit {
            let message = FeedbackMessage {
                text: refusal_message(self.agents.templates(), task),
                scenario,
                iteration: 0,
                approvals: 0,
                validation_passed: false,
                validator_critiques: Vec::new(),
                generation_trace: upstream,
            };
            return Ok(PipelineOutcome {
                request_id: request_id.to_string(),
                scenario,
                message,
                report,
                exploit,
                analysis: None,
                quorum_history: Vec::new(),
                exhausted: false,
                safe_hint_used: false,
            });
        }

        let analysis = match (&report, scenario.is_failing()) {
            (Some(report), true) => {
                let (analysis, calls) =
                    self.agents.analyze_errors(request.source_code(), task, report, request_id).await?;
                upstream.extend(calls);
                Some(analysis)
            }
            _ => None,
        };

        let inputs = TeacherInputs {
            scenario: &scenario,
            request: &request,
            task,
            report: report.as_ref(),
            analysis: analysis.as_ref(),
            prior_critiques: &[],
            history,
        };
        let result = run_quorum(&self.agents, &inputs, quorum.unwrap_or(&self.quorum), request_id).await?;
        let mut message = result.final_message;
        upstream.append(&mut message.generation_trace);
        message.generation_trace = upstream;

        let safe_hint_used = result.safe_hint_used || (result.exhausted && self.strict);
        if safe_hint_used && !result.safe_hint_used {
            message.text = safe_hint(self.agents.templates(), task);
        }
        Ok(PipelineOutcome {
            request_id: request_id.to_string(),
            scenario,
            message,
            report,
            exploit,
            analysis,
            quorum_history: result.history,
            exhausted: result.exhausted,
            safe_hint_used,
        })
    }
}
