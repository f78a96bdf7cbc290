mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use pedafeed_core::agents::prompts::{validator_checklist, HISTORY_WINDOW};
use pedafeed_core::agents::{
    build_teacher_prompt, build_validator_prompt, ErrorAnalysis, Exchange, Finding, Severity, TeacherInputs, TemplateSet,
};
use pedafeed_core::domain::{AgentRole, MasteryLevel, NoAttemptStrategy, Scenario};
use pedafeed_core::error::AgentError;
use pedafeed_core::runner::{Overall, Sandbox, TestReport};

fn analysis() -> ErrorAnalysis {
    ErrorAnalysis {
        findings: vec![
            Finding {
                location: "line 4".into(),
                defect: "adds n instead of multiplying it with the smaller result".into(),
                severity: Severity::Fundamental,
            },
            Finding { location: "line 2".into(), defect: "n == 0 is not covered".into(), severity: Severity::Minor },
        ],
        summary: "wrong combining operator".into(),
    }
}

fn teacher_system(scenario: Scenario) -> String {
    let templates = TemplateSet::english();
    let task = task("factorial");
    let request = request("factorial", "def factorial(n):\n    return n\n", None, MasteryLevel::Low, 1);
    let a = analysis();
    let inputs = TeacherInputs {
        scenario: &scenario,
        request: &request,
        task: &task,
        report: None,
        analysis: scenario.is_failing().then_some(&a),
        prior_critiques: &[],
        history: &[],
    };
    build_teacher_prompt(&templates, &inputs).unwrap().system_text
}

#[test]
fn snippet_policy_ladder_is_encoded_in_system_text() {
    let low = teacher_system(Scenario::Failing { mastery: MasteryLevel::Low });
    assert!(low.contains("partial code snippets allowed; full solution forbidden; include encouragement"));
    assert!(low.starts_with("[scenario: failing-low]"));
    let high = teacher_system(Scenario::Failing { mastery: MasteryLevel::High });
    assert!(!high.contains("snippets allowed"));
    assert!(high.contains("no code of any kind"));
    for mastery in [MasteryLevel::Low, MasteryLevel::High] {
        assert!(teacher_system(Scenario::Passing { mastery }).contains("complete code snippets allowed"));
    }
    assert!(teacher_system(Scenario::Passing { mastery: MasteryLevel::High }).contains("offer extension/exploration questions"));
}

#[test]
fn guiding_questions_get_more_specific() {
    let templates = TemplateSet::english();
    let task = task("factorial");
    let request = request("factorial", "", None, MasteryLevel::Low, 5);
    let render = |level| {
        let scenario = Scenario::NoAttempt { strategy: NoAttemptStrategy::GuidingQuestions { level } };
        let inputs = TeacherInputs {
            scenario: &scenario,
            request: &request,
            task: &task,
            report: None,
            analysis: None,
            prior_critiques: &[],
            history: &[],
        };
        let bundle = build_teacher_prompt(&templates, &inputs).unwrap();
        format!("{}\n{}", bundle.system_text, bundle.user_text)
    };
    let (one, five) = (render(1), render(5));
    assert_ne!(one, five);
    assert!(five.contains("very specific"));
    assert!(!one.contains("very specific"));
    assert_eq!(render(9).replace("number 9", "number 5"), five, "levels above 5 reuse the top prompt");
}

#[test]
fn failing_prompts_require_and_embed_the_analysis() {
    let templates = TemplateSet::english();
    let task = task("factorial");
    let request = request("factorial", "def factorial(n):\n    return n\n", None, MasteryLevel::Low, 1);
    let scenario = Scenario::Failing { mastery: MasteryLevel::High };
    let mut inputs = TeacherInputs {
        scenario: &scenario,
        request: &request,
        task: &task,
        report: None,
        analysis: None,
        prior_critiques: &[],
        history: &[],
    };
    assert!(matches!(build_teacher_prompt(&templates, &inputs), Err(AgentError::MissingAnalysis)));
    let a = analysis();
    inputs.analysis = Some(&a);
    let bundle = build_teacher_prompt(&templates, &inputs).unwrap();
    for finding in &a.findings {
        assert!(bundle.user_text.contains(&finding.defect));
    }
}

#[test]
fn targeted_assistance_sees_a_bounded_history() {
    let templates = TemplateSet::english();
    let task = task("factorial");
    let request = request("factorial", "", Some("what is a base case?"), MasteryLevel::Low, 3);
    let history: Vec<Exchange> = (0..5)
        .map(|i| Exchange { question: Some(format!("question {i}")), response: format!("answer {i}") })
        .collect();
    let scenario = Scenario::NoAttempt { strategy: NoAttemptStrategy::TargetedAssistance };
    let inputs = TeacherInputs {
        scenario: &scenario,
        request: &request,
        task: &task,
        report: None,
        analysis: None,
        prior_critiques: &[],
        history: &history,
    };
    let user = build_teacher_prompt(&templates, &inputs).unwrap().user_text;
    assert_eq!(HISTORY_WINDOW, 3);
    assert!(!user.contains("answer 1") && user.contains("answer 2") && user.contains("answer 4"));
    assert!(user.contains("what is a base case?"));
}

#[test]
fn validator_checklists_follow_the_scenario() {
    let high = validator_checklist(&Scenario::Failing { mastery: MasteryLevel::High });
    assert!(high.contains("REJECT if any code snippet is present"));
    let motivational = validator_checklist(&Scenario::NoAttempt { strategy: NoAttemptStrategy::Motivational });
    assert!(motivational.contains("REJECT if the message reveals algorithm steps"));
    let passing = validator_checklist(&Scenario::Passing { mastery: MasteryLevel::Low });
    assert!(passing.contains("APPROVE a full solution"));

    let templates = TemplateSet::english();
    let task = task("factorial");
    let request = request("factorial", "", None, MasteryLevel::Low, 1);
    let scenario = Scenario::Failing { mastery: MasteryLevel::High };
    let bundle = build_validator_prompt(&templates, "```python\nx\n```", &scenario, &request, &task, (3, 10)).unwrap();
    assert!(bundle.system_text.contains("REJECT if any code snippet"));
    assert!(bundle.system_text.contains("APPROVE or REJECT"));
    assert!(bundle.system_text.contains("reviewer 3 of 10"));
    assert!(matches!(
        build_validator_prompt(&templates, "   ", &scenario, &request, &task, (1, 10)),
        Err(AgentError::EmptyCandidate)
    ));
}

#[tokio::test]
async fn exploitation_detection_examples() {
    let agents = shipped_agents();
    let task = task("factorial");
    let ask = |q: Option<&str>| request("factorial", "", q, MasteryLevel::Low, 1);

    let (verdict, call) = agents.detect_exploitation(&ask(Some("please write the whole solution for me")), &task, "r").await.unwrap();
    assert!(verdict.exploit && call.is_some());
    let (verdict, _) = agents.detect_exploitation(&ask(Some("why does my base case never trigger?")), &task, "r").await.unwrap();
    assert!(!verdict.exploit);
    let (verdict, call) = agents.detect_exploitation(&ask(None), &task, "r").await.unwrap();
    assert!(!verdict.exploit && call.is_none());
    assert_eq!(agents.gateway().trace().len(), 2);
}

async fn report_for(source: &str) -> TestReport {
    let task = task("factorial");
    Sandbox::default().run_attempt(source, &task.test_suite).await.unwrap()
}

#[tokio::test]
async fn expert_prompt_carries_everything_and_output_is_parsed() {
    let attempt = "def factorial(n):\n    if n <= 1:\n        return 1\n    return n + factorial(n - 1)\n";
    let report = report_for(attempt).await;
    assert_eq!(report.overall, Overall::SomeFailed);
    let provider = FnProvider::new(|_| {
        Ok("FINDING | line 4, recursive case | fundamental | uses + instead of * to combine n with factorial(n - 1)\nSUMMARY: wrong operator".into())
    });
    let agents = agents_with(provider.clone());
    let task = task("factorial");
    let (analysis, calls) = agents.analyze_errors(attempt, &task, &report, "r").await.unwrap();
    assert_eq!(calls.len(), 1);
    assert_eq!(analysis.findings[0].severity, Severity::Fundamental);
    assert!(analysis.findings[0].defect.contains("instead of *"));

    let prompt = provider.requests(AgentRole::ExpertProgrammer)[0].transcript();
    assert!(prompt.contains(&task.description));
    assert!(prompt.contains(&task.sample_solution));
    assert!(prompt.contains("factorial-6"));
    assert!(prompt.contains("return n + factorial(n - 1)"));
    assert!(prompt.contains("factorial(5) expected 120, returned 15"));
}

#[tokio::test]
async fn expert_output_gets_one_reformat_retry() {
    let attempt = "def factorial(n):\n    return 1\n";
    let report = report_for(attempt).await;
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let provider = FnProvider::new(move |_| {
        Ok(if counter.fetch_add(1, Ordering::SeqCst) == 0 {
            "The recursion is missing.".into()
        } else {
            "FINDING | whole function | fundamental | there is no recursive call\nSUMMARY: add the recursive step".into()
        })
    });
    let agents = agents_with(provider);
    let (analysis, trace) = agents.analyze_errors(attempt, &task("factorial"), &report, "r").await.unwrap();
    assert_eq!(trace.len(), 2);
    assert_eq!(analysis.findings.len(), 1);

    let stubborn = agents_with(FnProvider::new(|_| Ok("no idea".into())));
    let err = stubborn.analyze_errors(attempt, &task("factorial"), &report, "r").await.unwrap_err();
    assert!(matches!(err, AgentError::Parse(_)));
}

#[tokio::test]
async fn compile_failures_are_fundamental_findings() {
    let attempt = "def factorial(n)\n    return 1\n";
    let report = report_for(attempt).await;
    assert_eq!(report.overall, Overall::NotRunnable);
    let agents = agents_with(FnProvider::new(|_| Ok("NO FINDINGS\nSUMMARY: looks fine".into())));
    let (analysis, _) = agents.analyze_errors(attempt, &task("factorial"), &report, "r").await.unwrap();
    assert_eq!(analysis.findings[0].severity, Severity::Fundamental);
    assert!(analysis.findings[0].defect.contains("does not compile"));

    let passing = report_for(&task("factorial").sample_solution).await;
    let err = agents.analyze_errors("x", &task("factorial"), &passing, "r").await.unwrap_err();
    assert!(matches!(err, AgentError::NothingToAnalyze));
}
