mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::*;
use pedafeed_core::agents::prompts::REVISION_MARKER;
use pedafeed_core::agents::TeacherInputs;
use pedafeed_core::domain::{AgentRole, MasteryLevel, NoAttemptStrategy, Scenario};
use pedafeed_core::error::{AgentError, GatewayError};
use pedafeed_core::gateway::ChatRequest;
use pedafeed_core::quorum::{run_quorum, QuorumConfig, QuorumResult};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

const MOTIVATIONAL: Scenario = Scenario::NoAttempt { strategy: NoAttemptStrategy::Motivational };

fn teacher_text(request: &ChatRequest) -> String {
    let iteration = request.transcript().matches(REVISION_MARKER).count();
    format!("Which input is the smallest one you can answer directly? (draft after {iteration} revisions)")
}

/// Validators approve when `approve(reviewer, candidate)` says so.
async fn run_with(
    config: QuorumConfig,
    approve: impl Fn(u32, &str) -> bool + Send + Sync + 'static,
) -> (QuorumResult, std::sync::Arc<FnProvider>) {
    let provider = FnProvider::new(move |req| match req.metadata.agent_role {
        AgentRole::Teacher => Ok(teacher_text(req)),
        AgentRole::Validator => {
            let reviewer = reviewer_index(req);
            let candidate = req.messages.last().unwrap().content.rsplit("Candidate feedback:").next().unwrap().to_string();
            Ok(if approve(reviewer, &candidate) {
                "APPROVE fine".to_string()
            } else {
                format!("REJECT reviewer {reviewer} wants a more concrete question")
            })
        }
        other => panic!("unexpected role {other:?}"),
    });
    let agents = agents_with(provider.clone());
    let task = task("factorial");
    let request = request("factorial", "", None, MasteryLevel::Low, 1);
    let inputs = TeacherInputs {
        scenario: &MOTIVATIONAL,
        request: &request,
        task: &task,
        report: None,
        analysis: None,
        prior_critiques: &[],
        history: &[],
    };
    let result = run_quorum(&agents, &inputs, &config, "req-1").await.unwrap();
    (result, provider)
}

#[tokio::test]
async fn seven_of_ten_passes_on_first_iteration() {
    let started = Instant::now();
    let (result, provider) = run_with(QuorumConfig::default(), |reviewer, _| reviewer <= 7).await;
    assert!(result.final_message.validation_passed);
    assert!(!result.exhausted);
    assert_eq!(result.final_message.iteration, 1);
    assert_eq!(result.final_message.approvals, 7);
    assert_eq!(result.history.len(), 1);
    assert_eq!(provider.requests(AgentRole::Validator).len(), 10);
    assert!(started.elapsed().as_secs() < 5);
}

#[tokio::test]
async fn constant_six_of_ten_exhausts_after_five_iterations() {
    let started = Instant::now();
    let (result, provider) = run_with(QuorumConfig::default(), |reviewer, _| reviewer <= 6).await;
    assert!(result.exhausted);
    assert!(!result.final_message.validation_passed);
    assert_eq!(result.history.len(), 5);
    assert!(result.history.iter().all(|h| h.approvals == 6));
    // Tie at 6 goes to the latest candidate.
    assert_eq!(result.final_message.iteration, 5);
    assert_eq!(provider.requests(AgentRole::Teacher).len(), 5);
    assert!(started.elapsed().as_secs() < 5);
}

#[tokio::test]
async fn unanimous_approval() {
    let (result, _) = run_with(QuorumConfig::default(), |_, _| true).await;
    assert_eq!((result.final_message.iteration, result.final_message.approvals), (1, 10));
}

#[tokio::test]
async fn best_candidate_tie_goes_to_latest() {
    let config = QuorumConfig { max_iterations: 3, ..QuorumConfig::default() };
    // 0 revisions -> 5 approvals, afterwards 6.
    let (result, _) = run_with(config, |reviewer, candidate| {
        let limit = if candidate.contains("after 0 revisions") { 5 } else { 6 };
        reviewer <= limit
    })
    .await;
    let approvals: Vec<u32> = result.history.iter().map(|h| h.approvals).collect();
    assert_eq!(approvals, vec![5, 6, 6]);
    assert!(result.exhausted);
    assert_eq!(result.final_message.iteration, 3);
    assert_eq!(result.final_message.approvals, 6);
}

#[tokio::test]
async fn critiques_are_threaded_into_the_next_teacher_prompt() {
    let (result, provider) = run_with(QuorumConfig { max_iterations: 2, ..QuorumConfig::default() }, |r, _| r <= 2).await;
    let teacher = provider.requests(AgentRole::Teacher);
    assert_eq!(teacher.len(), 2);
    assert!(!teacher[0].transcript().contains(REVISION_MARKER));
    let second = teacher[1].transcript();
    assert!(second.contains(REVISION_MARKER));
    let first_critiques = &result.history[0].critiques;
    assert!(first_critiques.iter().any(|c| second.contains(c.as_str())));
    // At most three critiques are carried over.
    assert_eq!(first_critiques.iter().filter(|c| second.contains(c.as_str())).count(), 3);
}

#[tokio::test]
async fn threading_can_be_switched_off() {
    let config = QuorumConfig { max_iterations: 2, thread_critiques: false, ..QuorumConfig::default() };
    let (_, provider) = run_with(config, |r, _| r <= 2).await;
    assert!(provider.requests(AgentRole::Teacher).iter().all(|r| !r.transcript().contains(REVISION_MARKER)));
}

#[tokio::test]
async fn failed_validator_calls_count_as_rejections() {
    let provider = FnProvider::new(|req| match req.metadata.agent_role {
        AgentRole::Teacher => Ok("What does your function return for the smallest input?".into()),
        _ if reviewer_index(req) <= 3 => Err(GatewayError::Transport("connection reset".into())),
        _ => Ok("APPROVE".into()),
    });
    let agents = agents_with(provider);
    let task = task("factorial");
    let request = request("factorial", "", None, MasteryLevel::Low, 1);
    let inputs = TeacherInputs {
        scenario: &MOTIVATIONAL,
        request: &request,
        task: &task,
        report: None,
        analysis: None,
        prior_critiques: &[],
        history: &[],
    };
    let result = run_quorum(&agents, &inputs, &QuorumConfig::default(), "req").await.unwrap();
    assert!(result.final_message.validation_passed);
    assert_eq!(result.final_message.approvals, 7);
    assert_eq!(result.history[0].validator_failures, 3);
}

#[tokio::test]
async fn teacher_hard_failure_propagates() {
    let provider = FnProvider::new(|_| Err(GatewayError::ProviderRefusal { status: 400, body: "bad".into() }));
    let agents = agents_with(provider);
    let task = task("factorial");
    let request = request("factorial", "", None, MasteryLevel::Low, 1);
    let inputs = TeacherInputs {
        scenario: &MOTIVATIONAL,
        request: &request,
        task: &task,
        report: None,
        analysis: None,
        prior_critiques: &[],
        history: &[],
    };
    let err = run_quorum(&agents, &inputs, &QuorumConfig::default(), "req").await.unwrap_err();
    assert!(matches!(err, AgentError::Gateway(GatewayError::ProviderRefusal { status: 400, .. })));
}

#[tokio::test]
async fn policy_violations_skip_the_validators_and_never_ship() {
    let provider = FnProvider::new(|req| match req.metadata.agent_role {
        AgentRole::Teacher => Ok("Try this:\n```python\nreturn 1\n```".into()),
        _ => Ok("APPROVE".into()),
    });
    let agents = agents_with(provider.clone());
    let task = task("factorial");
    let request = request("factorial", "", None, MasteryLevel::Low, 1);
    let inputs = TeacherInputs {
        scenario: &MOTIVATIONAL,
        request: &request,
        task: &task,
        report: None,
        analysis: None,
        prior_critiques: &[],
        history: &[],
    };
    let result = run_quorum(&agents, &inputs, &QuorumConfig::default(), "req").await.unwrap();
    assert!(result.exhausted && result.safe_hint_used);
    assert!(provider.requests(AgentRole::Validator).is_empty());
    assert!(!result.final_message.text.contains("```"));
    assert!(result.history.iter().all(|h| h.approvals == 0 && !h.policy_violations.is_empty()));
}

#[test]
fn pass_iff_approvals_reach_the_threshold() {
    let runtime = tokio::runtime::Runtime::new().unwrap();
    for required in 1..=10u32 {
        for approvals in 0..=10u32 {
            let config = QuorumConfig { approvals_required: required, max_iterations: 2, ..QuorumConfig::default() };
            let (result, _) = runtime.block_on(run_with(config, move |r, _| r <= approvals));
            assert_eq!(result.final_message.validation_passed, approvals >= required, "A={required} c={approvals}");
            for entry in &result.history {
                assert!(entry.approvals <= 10);
            }
            if !result.final_message.validation_passed {
                assert!(result.history.iter().all(|h| h.approvals < required));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn approval_count_ignores_which_validators_approve(count in 0u32..=10, seed in any::<u64>()) {
        let mut reviewers: Vec<u32> = (1..=10).collect();
        reviewers.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let approving: BTreeSet<u32> = reviewers.into_iter().take(count as usize).collect();
        let config = QuorumConfig { max_iterations: 1, ..QuorumConfig::default() };
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let (result, _) = runtime.block_on(run_with(config, move |r, _| approving.contains(&r)));
        prop_assert_eq!(result.history[0].approvals, count);
    }
}
