use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::templates::{TemplateKey, TemplateSet};
use super::{ErrorAnalysis, Exchange, PromptBundle, PromptRole};
use crate::domain::{HelpRequest, MasteryLevel, NoAttemptStrategy, Scenario, Task};
use crate::error::AgentError;
use crate::router::prompt_guidance_level;
use crate::runner::{Outcome, TestReport};

/// Earlier exchanges shown to the targeted-assistance prompt.
pub const HISTORY_WINDOW: usize = 3;
pub const REVISION_MARKER: &str = "REVISION REQUIRED";

const GUIDANCE: [&str; 5] = [
    "Ask two or three open questions about what the task asks for and what a smaller version of the problem looks like.",
    "Ask questions that point the student toward the simplest possible input and what the function should return for it.",
    "Ask more specific questions that treat the base case and the recursive case separately.",
    "Ask specific questions about how the result for an input relates to the result for a smaller input, using the values of one small example.",
    "Ask very specific, elaborative questions that walk through one small example step by step, naming the stopping condition and the shape of the self-call, still without writing code.",
];

/// Instructions for guiding questions at an escalation level (clamped to 1..=5).
pub fn guidance_instructions(level: u32) -> &'static str {
    GUIDANCE[(prompt_guidance_level(level) - 1) as usize]
}

fn code_or_placeholder(source: &str) -> String {
    if source.trim().is_empty() {
        "(empty)".to_string()
    } else {
        source.to_string()
    }
}

fn question_or_placeholder(request: &HelpRequest) -> String {
    request.question().unwrap_or("(no message)").to_string()
}

fn call_text(task: &Task, test_id: &str) -> String {
    task.test_suite
        .cases()
        .iter()
        .find(|c| c.id == test_id)
        .map(|c| {
            let args: Vec<String> = c.call.args.iter().map(ToString::to_string).collect();
            format!("{}({}) expected {}", c.call.function, args.join(", "), c.expected)
        })
        .unwrap_or_else(|| test_id.to_string())
}

/// Human-readable test outcome list.
pub fn describe_report(task: &Task, report: &TestReport) -> String {
    let mut out = format!("{}/{} tests passed.", report.passed(), report.results.len());
    if !report.compile_ok {
        let _ = write!(out, " The code does not compile: {}", report.compile_message.as_deref().unwrap_or("syntax error"));
        return out;
    }
    for result in report.failures() {
        let call = call_text(task, &result.test_id);
        let outcome = match &result.outcome {
            Outcome::WrongValue { actual } => format!("returned {actual}"),
            Outcome::Raised { error_kind, message } => format!("raised {error_kind:?} ({message})"),
            Outcome::Timeout => "timed out".to_string(),
            Outcome::Pass => continue,
        };
        let _ = write!(out, "\n- {call}, {outcome}");
    }
    out
}

pub fn describe_analysis(analysis: &ErrorAnalysis) -> String {
    let mut out = String::new();
    for finding in &analysis.findings {
        let _ = writeln!(out, "- [{}] {}: {}", finding.severity.as_str(), finding.location, finding.defect);
    }
    if analysis.findings.is_empty() {
        out.push_str("- no specific defect identified\n");
    }
    if !analysis.summary.is_empty() {
        let _ = write!(out, "Summary: {}", analysis.summary);
    }
    out.trim_end().to_string()
}

fn describe_history(history: &[Exchange]) -> String {
    let recent = &history[history.len().saturating_sub(HISTORY_WINDOW)..];
    if recent.is_empty() {
        return "(none)".to_string();
    }
    recent
        .iter()
        .map(|e| format!("Student: {}\nTutor: {}", e.question.as_deref().unwrap_or("(no message)"), e.response))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn common_values<'a>(request: &HelpRequest, task: &Task) -> BTreeMap<&'a str, String> {
    let mut values = BTreeMap::new();
    values.insert("task_title", task.title.clone());
    values.insert("task_description", task.description.clone());
    values.insert("source_code", code_or_placeholder(request.source_code()));
    values.insert("question", question_or_placeholder(request));
    values
}

pub fn build_exploit_prompt(templates: &TemplateSet, request: &HelpRequest, task: &Task) -> PromptBundle {
    let (system_text, user_text) = templates.get(TemplateKey::ExploitDetector).render(&common_values(request, task));
    PromptBundle { role: PromptRole::ExploitDetector, system_text, user_text, locale: templates.locale().into() }
}

pub fn build_expert_prompt(templates: &TemplateSet, attempt: &str, task: &Task, report: &TestReport) -> PromptBundle {
    let mut values = BTreeMap::new();
    values.insert("task_description", task.description.clone());
    values.insert("sample_solution", task.sample_solution.clone());
    values.insert("test_suite", serde_json::to_string_pretty(&task.test_suite).unwrap_or_default());
    values.insert("source_code", code_or_placeholder(attempt));
    values.insert("failing_outcomes", describe_report(task, report));
    let (system_text, user_text) = templates.get(TemplateKey::ExpertProgrammer).render(&values);
    PromptBundle { role: PromptRole::ExpertProgrammer, system_text, user_text, locale: templates.locale().into() }
}

/// Everything a teacher prompt may draw on.
#[derive(Debug, Clone, Copy)]
pub struct TeacherInputs<'a> {
    pub scenario: &'a Scenario,
    pub request: &'a HelpRequest,
    pub task: &'a Task,
    pub report: Option<&'a TestReport>,
    pub analysis: Option<&'a ErrorAnalysis>,
    pub prior_critiques: &'a [String],
    pub history: &'a [Exchange],
}

pub fn build_teacher_prompt(templates: &TemplateSet, inputs: &TeacherInputs<'_>) -> Result<PromptBundle, AgentError> {
    let scenario = inputs.scenario;
    let key = TemplateKey::for_scenario(scenario).ok_or_else(|| AgentError::NoTeacherTemplate(scenario.to_string()))?;
    if scenario.is_failing() && inputs.analysis.is_none() {
        return Err(AgentError::MissingAnalysis);
    }
    let mut values = common_values(inputs.request, inputs.task);
    if let Scenario::NoAttempt { strategy: NoAttemptStrategy::GuidingQuestions { level } } = scenario {
        values.insert("guidance_level", level.to_string());
        values.insert("guidance_instructions", guidance_instructions(*level).to_string());
    }
    values.insert("history", describe_history(inputs.history));
    if let Some(report) = inputs.report {
        values.insert("test_results", describe_report(inputs.task, report));
    }
    if let Some(analysis) = inputs.analysis {
        values.insert("analysis", describe_analysis(analysis));
    }
    let (system, mut user_text) = templates.get(key).render(&values);
    if !inputs.prior_critiques.is_empty() {
        let _ = write!(
            user_text,
            "\n\n{REVISION_MARKER}. Reviewers rejected the previous draft. Write a new message that addresses:"
        );
        for critique in inputs.prior_critiques {
            let _ = write!(user_text, "\n- {critique}");
        }
    }
    Ok(PromptBundle {
        role: PromptRole::Teacher(*scenario),
        system_text: format!("[scenario: {}]\n{}", scenario.label(), system),
        user_text,
        locale: templates.locale().into(),
    })
}

/// Scenario-specific review checklist.
pub fn validator_checklist(scenario: &Scenario) -> String {
    let items: &[&str] = match scenario {
        Scenario::Exploit => &[
            "The message politely declines to hand out the solution and motivates the student to try.",
            "REJECT if it contains any part of the solution.",
        ],
        Scenario::NoAttempt { strategy: NoAttemptStrategy::Motivational } => &[
            "Motivating tone that encourages the student to start writing code.",
            "Only high-level information: REJECT if the message reveals algorithm steps, solution details or any code.",
            "Asks the student for a concrete question.",
        ],
        Scenario::NoAttempt { strategy: NoAttemptStrategy::GuidingQuestions { .. } } => &[
            "Consists mainly of guiding questions that promote independent thinking.",
            "The questions become more specific with each further help request.",
            "REJECT if it reveals the solution, lists algorithm steps or contains code.",
        ],
        Scenario::NoAttempt { strategy: NoAttemptStrategy::TargetedAssistance } => &[
            "Directly answers the student's concrete question.",
            "REJECT if it reveals the complete solution or contains code.",
        ],
        Scenario::Failing { mastery: MasteryLevel::Low } => &[
            "Responds to the concrete problems of the attempt with explicit, elaborative guidance.",
            "Partial code snippets are acceptable; REJECT if the complete solution is revealed.",
            "Contains encouragement that keeps the student from giving up.",
        ],
        Scenario::Failing { mastery: MasteryLevel::High } => &[
            "Gives broader hints and elaborative feedback on the underlying concepts.",
            "REJECT if any code snippet is present, even a single line.",
            "REJECT if the complete solution is revealed.",
        ],
        Scenario::Passing { mastery: MasteryLevel::Low } => &[
            "Explains the concepts used in depth so the student understands the topic better.",
            "Complete code snippets are permitted: APPROVE a full solution with explanation when it is correct and understandable.",
        ],
        Scenario::Passing { mastery: MasteryLevel::High } => &[
            "Encourages deeper knowledge through explorative questions or extensions of the task.",
            "Complete code snippets are permitted.",
        ],
    };
    items.iter().map(|item| format!("- {item}")).collect::<Vec<_>>().join("\n")
}

pub fn build_validator_prompt(
    templates: &TemplateSet,
    candidate: &str,
    scenario: &Scenario,
    request: &HelpRequest,
    task: &Task,
    reviewer: (u32, u32),
) -> Result<PromptBundle, AgentError> {
    if candidate.trim().is_empty() {
        return Err(AgentError::EmptyCandidate);
    }
    let mut values = common_values(request, task);
    values.insert("scenario", scenario.to_string());
    values.insert("checklist", validator_checklist(scenario));
    values.insert("candidate", candidate.to_string());
    values.insert("reviewer_index", reviewer.0.to_string());
    values.insert("reviewer_count", reviewer.1.to_string());
    let (system_text, user_text) = templates.get(TemplateKey::Validator).render(&values);
    Ok(PromptBundle { role: PromptRole::Validator, system_text, user_text, locale: templates.locale().into() })
}

fn title_only(task: &Task) -> BTreeMap<&'static str, String> {
    BTreeMap::from([("task_title", task.title.clone())])
}

/// Fixed answer for exploitation attempts; no model call.
pub fn refusal_message(templates: &TemplateSet, task: &Task) -> String {
    templates.get(TemplateKey::ExploitRefusal).render_message(&title_only(task))
}

/// Generic hint delivered instead of an unvalidated candidate in strict mode.
pub fn safe_hint(templates: &TemplateSet, task: &Task) -> String {
    templates.get(TemplateKey::SafeHint).render_message(&title_only(task))
}
