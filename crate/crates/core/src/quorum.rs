//! Generate, validate, regenerate.

use futures::future::join_all;
use serde::{Deserialize, Serialize};

use crate::agents::policy;
use crate::agents::prompts::safe_hint;
use crate::agents::{build_teacher_prompt, build_validator_prompt, Agents, TeacherInputs};
use crate::domain::{AgentCall, FeedbackMessage};
use crate::error::{AgentError, QuorumConfigError};
use crate::gateway::digest;

/// Critiques carried into the next iteration.
pub const MAX_THREADED_CRITIQUES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuorumConfig {
    pub validators: u32,
    pub approvals_required: u32,
    pub max_iterations: u32,
    pub thread_critiques: bool,
}

impl Default for QuorumConfig {
    fn default() -> Self {
        Self { validators: 10, approvals_required: 7, max_iterations: 5, thread_critiques: true }
    }
}

impl QuorumConfig {
    pub fn validate(&self) -> Result<(), QuorumConfigError> {
        if self.validators == 0 {
            return Err(QuorumConfigError::NoValidators);
        }
        if self.approvals_required == 0 || self.approvals_required > self.validators {
            return Err(QuorumConfigError::Approvals {
                approvals: self.approvals_required,
                validators: self.validators,
            });
        }
        if self.max_iterations == 0 {
            return Err(QuorumConfigError::NoIterations);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub candidate_digest: String,
    pub approvals: u32,
    pub critiques: Vec<String>,
    /// Policy violations found before the validators were consulted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy_violations: Vec<String>,
    /// Validators whose call failed and were counted as rejections.
    #[serde(default)]
    pub validator_failures: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuorumResult {
    pub final_message: FeedbackMessage,
    pub history: Vec<IterationRecord>,
    pub exhausted: bool,
    /// Every candidate broke the snippet policy, so the generic hint was used.
    pub safe_hint_used: bool,
}

struct Candidate {
    text: String,
    iteration: u32,
    approvals: u32,
    critiques: Vec<String>,
    compliant: bool,
}

/// The longest critiques first, at most [`MAX_THREADED_CRITIQUES`].
pub fn select_critiques(critiques: &[String]) -> Vec<String> {
    let mut sorted: Vec<&String> = critiques.iter().filter(|c| !c.trim().is_empty()).collect();
    sorted.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()));
    let mut seen = std::collections::HashSet::new();
    sorted.retain(|c| seen.insert(*c));
    sorted.into_iter().take(MAX_THREADED_CRITIQUES).cloned().collect()
}

/// Runs the loop for one request. Teacher failures propagate; a failed
/// validator call counts as a rejection.
pub async fn run_quorum(
    agents: &Agents,
    inputs: &TeacherInputs<'_>,
    config: &QuorumConfig,
    request_id: &str,
) -> Result<QuorumResult, AgentError> {
    config.validate()?;
    let scenario = *inputs.scenario;
    let mut history = Vec::new();
    let mut trace: Vec<AgentCall> = Vec::new();
    let mut best: Option<Candidate> = None;
    let mut threaded: Vec<String> = inputs.prior_critiques.to_vec();

    for iteration in 1..=config.max_iterations {
        let teacher_inputs = TeacherInputs { prior_critiques: &threaded, ..*inputs };
        let bundle = build_teacher_prompt(agents.templates(), &teacher_inputs)?;
        let (text, call) = agents.generate(&bundle, request_id).await?;
        trace.push(call);

        let mut violations = policy::violations(&scenario, &text, inputs.task);
        if text.trim().is_empty() {
            violations.push("The message is empty.".into());
        }

        let mut approvals = 0;
        let mut critiques = Vec::new();
        let mut failures = 0;
        if violations.is_empty() {
            let prompts = (1..=config.validators)
                .map(|i| build_validator_prompt(agents.templates(), &text, &scenario, inputs.request, inputs.task, (i, config.validators)))
                .collect::<Result<Vec<_>, _>>()?;
            let verdicts = join_all(prompts.iter().map(|p| agents.validate(p, request_id))).await;
            for verdict in verdicts {
                match verdict {
                    Ok((verdict, call)) => {
                        trace.push(call);
                        if verdict.approved {
                            approvals += 1;
                        } else if !verdict.critique.is_empty() {
                            critiques.push(verdict.critique);
                        }
                    }
                    Err(AgentError::Gateway(err)) => {
                        tracing::warn!(request_id, error = %err, "validator call failed, counted as reject");
                        failures += 1;
                    }
                    Err(other) => return Err(other),
                }
            }
        } else {
            critiques = violations.clone();
        }

        history.push(IterationRecord {
            iteration,
            candidate_digest: digest(&text),
            approvals,
            critiques: critiques.clone(),
            policy_violations: violations,
            validator_failures: failures,
        });

        if approvals >= config.approvals_required {
            return Ok(QuorumResult {
                final_message: FeedbackMessage {
                    text,
                    scenario,
                    iteration,
                    approvals,
                    validation_passed: true,
                    validator_critiques: critiques,
                    generation_trace: trace,
                },
                history,
                exhausted: false,
                safe_hint_used: false,
            });
        }

        let compliant = history.last().expect("pushed above").policy_violations.is_empty();
        let candidate = Candidate { text, iteration, approvals, critiques, compliant };
        if best.as_ref().is_none_or(|b| (candidate.compliant, candidate.approvals) >= (b.compliant, b.approvals)) {
            best = Some(candidate);
        }
        if config.thread_critiques {
            let latest = &history.last().expect("pushed above").critiques;
            let selected = select_critiques(latest);
            if !selected.is_empty() {
                threaded = selected;
            }
        }
    }

    let best = best.expect("max_iterations >= 1");
    // A policy violation is never delivered, validated or not.
    let safe_hint_used = !best.compliant;
    let text = if safe_hint_used { safe_hint(agents.templates(), inputs.task) } else { best.text };
    Ok(QuorumResult {
        final_message: FeedbackMessage {
            text,
            scenario,
            iteration: best.iteration,
            approvals: best.approvals,
            validation_passed: false,
            validator_critiques: best.critiques,
            generation_trace: trace,
        },
        history,
        exhausted: true,
        safe_hint_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_bounds() {
        assert!(QuorumConfig::default().validate().is_ok());
        let bad = QuorumConfig { approvals_required: 11, ..QuorumConfig::default() };
        assert_eq!(bad.validate(), Err(QuorumConfigError::Approvals { approvals: 11, validators: 10 }));
        assert!(QuorumConfig { validators: 0, ..QuorumConfig::default() }.validate().is_err());
        assert!(QuorumConfig { max_iterations: 0, ..QuorumConfig::default() }.validate().is_err());
    }

    #[test]
    fn critique_selection_prefers_long_ones() {
        let input: Vec<String> = ["a", "bbbb", "", "cc", "ddd", "bbbb"].iter().map(|s| s.to_string()).collect();
        assert_eq!(select_critiques(&input), vec!["bbbb", "ddd", "cc"]);
    }
}
