//! Canonical value types shared by every stage of the feedback pipeline.
//!
//! Nothing in here performs I/O. Task validation that needs the sandbox lives
//! in [`crate::tasks`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::DomainError;

/// A programming exercise plus everything needed to grade it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub title: String,
    pub description: String,
    pub topic: String,
    pub starter_code: String,
    pub sample_solution: String,
    #[serde(default = "default_locale")]
    pub locale: String,
    #[serde(rename = "tests")]
    pub test_suite: TestSuite,
}

fn default_locale() -> String {
    "en".to_string()
}

impl Task {
    /// Name of the function the suite exercises (taken from the first case).
    pub fn entry_function(&self) -> Option<&str> {
        self.test_suite.cases().first().map(|c| c.call.function.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestSuite(Vec<TestCase>);

impl TestSuite {
    pub fn new(cases: Vec<TestCase>) -> Self {
        Self(cases)
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawTestCase", into = "RawTestCase")]
pub struct TestCase {
    pub id: String,
    pub call: Call,
    pub expected: Value,
    pub comparison: Comparison,
}

/// Wire form: `comparison` defaults to exact, `epsilon` sits next to it.
#[derive(Serialize, Deserialize)]
struct RawTestCase {
    id: String,
    call: Call,
    expected: Value,
    #[serde(default)]
    comparison: ComparisonKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ComparisonKind {
    #[default]
    Exact,
    Numeric,
}

impl From<RawTestCase> for TestCase {
    fn from(raw: RawTestCase) -> Self {
        let comparison = match raw.comparison {
            ComparisonKind::Exact => Comparison::Exact,
            // A missing epsilon is caught by `check`.
            ComparisonKind::Numeric => Comparison::Numeric { epsilon: raw.epsilon.unwrap_or(0.0) },
        };
        Self { id: raw.id, call: raw.call, expected: raw.expected, comparison }
    }
}

impl From<TestCase> for RawTestCase {
    fn from(case: TestCase) -> Self {
        let (comparison, epsilon) = match case.comparison {
            Comparison::Exact => (ComparisonKind::Exact, None),
            Comparison::Numeric { epsilon } => (ComparisonKind::Numeric, Some(epsilon)),
        };
        Self { id: case.id, call: case.call, expected: case.expected, comparison, epsilon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Call {
    pub function: String,
    #[serde(default)]
    pub args: Vec<Value>,
}

/// How an actual return value is compared with the expected one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum Comparison {
    #[default]
    Exact,
    Numeric { epsilon: f64 },
}

impl TestCase {
    pub fn exact(id: impl Into<String>, function: impl Into<String>, args: Vec<Value>, expected: Value) -> Self {
        Self {
            id: id.into(),
            call: Call { function: function.into(), args },
            expected,
            comparison: Comparison::Exact,
        }
    }

    pub fn check(&self) -> Result<(), DomainError> {
        match self.comparison {
            Comparison::Numeric { epsilon } if !(epsilon > 0.0) => Err(DomainError::InvalidEpsilon {
                test_id: self.id.clone(),
            }),
            _ => Ok(()),
        }
    }
}

/// Student mastery on a topic. Accepts the `Weak`/`Strong` spelling on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MasteryLevel {
    #[serde(alias = "Weak", alias = "weak", alias = "low")]
    Low,
    #[serde(alias = "Strong", alias = "strong", alias = "high")]
    High,
}

impl MasteryLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            MasteryLevel::Low => "low",
            MasteryLevel::High => "high",
        }
    }

    /// Label used on the evaluation dashboard.
    pub fn rating_label(self) -> &'static str {
        match self {
            MasteryLevel::Low => "Weak",
            MasteryLevel::High => "Strong",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            MasteryLevel::Low => MasteryLevel::High,
            MasteryLevel::High => MasteryLevel::Low,
        }
    }
}

impl std::str::FromStr for MasteryLevel {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" | "weak" => Ok(MasteryLevel::Low),
            "high" | "strong" => Ok(MasteryLevel::High),
            other => Err(DomainError::UnknownMastery(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub task_id: String,
    pub topic: String,
    pub solved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub student_id: String,
    #[serde(default)]
    pub history: Vec<SolveRecord>,
    #[serde(default)]
    pub help_counts: BTreeMap<String, u32>,
    #[serde(default)]
    pub explicit_mastery: Option<MasteryLevel>,
}

impl StudentProfile {
    pub fn new(student_id: impl Into<String>) -> Self {
        Self { student_id: student_id.into(), ..Default::default() }
    }

    pub fn record_solve(&mut self, task: &Task, solved: bool) {
        self.history.push(SolveRecord {
            task_id: task.id.clone(),
            topic: task.topic.clone(),
            solved,
        });
    }

    pub fn help_count(&self, task_id: &str) -> u32 {
        self.help_counts.get(task_id).copied().unwrap_or(0)
    }

    /// Increments and returns the new help count for `task_id`.
    pub fn bump_help(&mut self, task_id: &str) -> u32 {
        let count = self.help_counts.entry(task_id.to_string()).or_insert(0);
        *count += 1;
        *count
    }
}

pub const MASTERY_SOLVE_RATE: f64 = 0.5;
pub const MASTERY_MIN_ATTEMPTED: usize = 2;

/// Explicit override wins; otherwise `High` iff at least two distinct tasks on
/// the topic were attempted and at least half of them were solved.
pub fn resolve_mastery(profile: &StudentProfile, topic: &str) -> MasteryLevel {
    if let Some(level) = profile.explicit_mastery {
        return level;
    }
    let mut attempted = BTreeSet::new();
    let mut solved = BTreeSet::new();
    for record in profile.history.iter().filter(|r| r.topic == topic) {
        attempted.insert(record.task_id.as_str());
        if record.solved {
            solved.insert(record.task_id.as_str());
        }
    }
    if attempted.len() < MASTERY_MIN_ATTEMPTED {
        return MasteryLevel::Low;
    }
    let rate = solved.len() as f64 / attempted.len() as f64;
    if rate >= MASTERY_SOLVE_RATE {
        MasteryLevel::High
    } else {
        MasteryLevel::Low
    }
}

/// Index of loaded tasks by id. The only way to obtain a [`HelpRequest`].
#[derive(Debug, Clone, Default)]
pub struct TaskSet {
    tasks: BTreeMap<String, Task>,
}

impl TaskSet {
    pub fn new(tasks: impl IntoIterator<Item = Task>) -> Result<Self, DomainError> {
        let mut map = BTreeMap::new();
        for task in tasks {
            if map.contains_key(&task.id) {
                return Err(DomainError::DuplicateTask(task.id));
            }
            map.insert(task.id.clone(), task);
        }
        Ok(Self { tasks: map })
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.tasks.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Validates a snapshot against the known tasks.
    pub fn bind(&self, snapshot: RequestSnapshot) -> Result<HelpRequest, DomainError> {
        if !self.tasks.contains_key(&snapshot.task_id) {
            return Err(DomainError::UnknownTask(snapshot.task_id));
        }
        if snapshot.help_count < 1 {
            return Err(DomainError::InvalidHelpCount);
        }
        Ok(HelpRequest(snapshot))
    }
}

/// Plain-data form of a help request, as stored in corpus files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSnapshot {
    pub student_id: String,
    pub task_id: String,
    pub source_code: String,
    #[serde(default)]
    pub text_input: Option<String>,
    pub mastery: MasteryLevel,
    pub help_count: u32,
    pub timestamp: DateTime<Utc>,
}

/// A help request whose task is known and whose help count is at least one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct HelpRequest(RequestSnapshot);

impl HelpRequest {
    pub fn student_id(&self) -> &str {
        &self.0.student_id
    }

    pub fn task_id(&self) -> &str {
        &self.0.task_id
    }

    pub fn source_code(&self) -> &str {
        &self.0.source_code
    }

    /// The student's question, if it is non-empty after trimming.
    pub fn question(&self) -> Option<&str> {
        self.0.text_input.as_deref().map(str::trim).filter(|t| !t.is_empty())
    }

    pub fn mastery(&self) -> MasteryLevel {
        self.0.mastery
    }

    pub fn help_count(&self) -> u32 {
        self.0.help_count
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.0.timestamp
    }

    pub fn snapshot(&self) -> &RequestSnapshot {
        &self.0
    }

    pub fn into_snapshot(self) -> RequestSnapshot {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProgressState {
    NoAttempt,
    FailingAttempt,
    PassingAttempt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoAttemptStrategy {
    Motivational,
    GuidingQuestions { level: u32 },
    TargetedAssistance,
}

/// The pedagogical branch a request is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Exploit,
    NoAttempt { strategy: NoAttemptStrategy },
    Failing { mastery: MasteryLevel },
    Passing { mastery: MasteryLevel },
}

impl Scenario {
    pub fn progress(&self) -> Option<ProgressState> {
        match self {
            Scenario::Exploit => None,
            Scenario::NoAttempt { .. } => Some(ProgressState::NoAttempt),
            Scenario::Failing { .. } => Some(ProgressState::FailingAttempt),
            Scenario::Passing { .. } => Some(ProgressState::PassingAttempt),
        }
    }

    pub fn mastery(&self) -> Option<MasteryLevel> {
        match self {
            Scenario::Failing { mastery } | Scenario::Passing { mastery } => Some(*mastery),
            _ => None,
        }
    }

    pub fn is_failing(&self) -> bool {
        matches!(self, Scenario::Failing { .. })
    }

    /// Stable short label, e.g. `failing-high`. Guiding-question levels are
    /// folded into one label.
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Exploit => "exploit",
            Scenario::NoAttempt { strategy: NoAttemptStrategy::Motivational } => "no-attempt-motivational",
            Scenario::NoAttempt { strategy: NoAttemptStrategy::GuidingQuestions { .. } } => {
                "no-attempt-guiding-questions"
            }
            Scenario::NoAttempt { strategy: NoAttemptStrategy::TargetedAssistance } => {
                "no-attempt-targeted-assistance"
            }
            Scenario::Failing { mastery: MasteryLevel::Low } => "failing-low",
            Scenario::Failing { mastery: MasteryLevel::High } => "failing-high",
            Scenario::Passing { mastery: MasteryLevel::Low } => "passing-low",
            Scenario::Passing { mastery: MasteryLevel::High } => "passing-high",
        }
    }

    /// Label shown to raters: mastery for attempts, "No Coding Attempt" otherwise.
    pub fn rating_label(&self) -> &'static str {
        match self.mastery() {
            Some(m) => m.rating_label(),
            None => "No Coding Attempt",
        }
    }

    pub fn check(&self) -> Result<(), DomainError> {
        match self {
            Scenario::NoAttempt { strategy: NoAttemptStrategy::GuidingQuestions { level: 0 } } => {
                Err(DomainError::InvalidGuidanceLevel)
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::NoAttempt { strategy: NoAttemptStrategy::GuidingQuestions { level } } => {
                write!(f, "{}(level={})", self.label(), level)
            }
            _ => f.write_str(self.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    ExploitDetector,
    ExpertProgrammer,
    Teacher,
    Validator,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::ExploitDetector => "exploit_detector",
            AgentRole::ExpertProgrammer => "expert_programmer",
            AgentRole::Teacher => "teacher",
            AgentRole::Validator => "validator",
        }
    }
}

impl std::str::FromStr for AgentRole {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exploit_detector" => Ok(AgentRole::ExploitDetector),
            "expert_programmer" => Ok(AgentRole::ExpertProgrammer),
            "teacher" => Ok(AgentRole::Teacher),
            "validator" => Ok(AgentRole::Validator),
            other => Err(DomainError::UnknownRole(other.to_string())),
        }
    }
}

/// One LLM call made while producing a message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCall {
    pub role: AgentRole,
    pub prompt_digest: String,
    pub response_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub text: String,
    pub scenario: Scenario,
    pub iteration: u32,
    pub approvals: u32,
    pub validation_passed: bool,
    #[serde(default)]
    pub validator_critiques: Vec<String>,
    #[serde(default)]
    pub generation_trace: Vec<AgentCall>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn task(id: &str) -> Task {
        Task {
            id: id.into(),
            title: "t".into(),
            description: "d".into(),
            topic: "recursion".into(),
            starter_code: String::new(),
            sample_solution: String::new(),
            locale: "en".into(),
            test_suite: TestSuite::new(vec![TestCase::exact("t1", "f", vec![], Value::Null)]),
        }
    }

    fn record(task: &str, solved: bool) -> SolveRecord {
        SolveRecord { task_id: task.into(), topic: "recursion".into(), solved }
    }

    #[test]
    fn explicit_mastery_wins() {
        let mut profile = StudentProfile::new("s");
        profile.history = vec![record("a", false), record("b", false)];
        profile.explicit_mastery = Some(MasteryLevel::High);
        assert_eq!(resolve_mastery(&profile, "recursion"), MasteryLevel::High);
    }

    #[test]
    fn three_of_four_solved_is_high() {
        let mut profile = StudentProfile::new("s");
        profile.history =
            vec![record("a", true), record("b", true), record("c", true), record("d", false)];
        assert_eq!(resolve_mastery(&profile, "recursion"), MasteryLevel::High);
    }

    #[test]
    fn empty_history_is_low() {
        assert_eq!(resolve_mastery(&StudentProfile::new("s"), "recursion"), MasteryLevel::Low);
    }

    #[test]
    fn single_solved_task_is_not_enough() {
        let mut profile = StudentProfile::new("s");
        profile.history = vec![record("a", true), record("a", true)];
        assert_eq!(resolve_mastery(&profile, "recursion"), MasteryLevel::Low);
    }

    #[test]
    fn other_topics_are_ignored() {
        let mut profile = StudentProfile::new("s");
        profile.history = vec![
            SolveRecord { task_id: "x".into(), topic: "loops".into(), solved: true },
            SolveRecord { task_id: "y".into(), topic: "loops".into(), solved: true },
        ];
        assert_eq!(resolve_mastery(&profile, "recursion"), MasteryLevel::Low);
        assert_eq!(resolve_mastery(&profile, "loops"), MasteryLevel::High);
    }

    #[test]
    fn weak_and_strong_spellings_are_accepted() {
        let low: MasteryLevel = serde_json::from_str("\"Weak\"").unwrap();
        let high: MasteryLevel = serde_json::from_str("\"Strong\"").unwrap();
        assert_eq!((low, high), (MasteryLevel::Low, MasteryLevel::High));
        assert_eq!("strong".parse::<MasteryLevel>().unwrap(), MasteryLevel::High);
        assert_eq!(serde_json::to_string(&MasteryLevel::Low).unwrap(), "\"Low\"");
    }

    #[test]
    fn unknown_task_cannot_be_bound() {
        let tasks = TaskSet::new([task("fact")]).unwrap();
        let snapshot = RequestSnapshot {
            student_id: "s".into(),
            task_id: "nope".into(),
            source_code: String::new(),
            text_input: None,
            mastery: MasteryLevel::Low,
            help_count: 1,
            timestamp: Utc::now(),
        };
        assert!(matches!(tasks.bind(snapshot.clone()), Err(DomainError::UnknownTask(_))));
        let zero = RequestSnapshot { task_id: "fact".into(), help_count: 0, ..snapshot.clone() };
        assert!(matches!(tasks.bind(zero), Err(DomainError::InvalidHelpCount)));
        let ok = RequestSnapshot { task_id: "fact".into(), ..snapshot };
        assert!(tasks.bind(ok).is_ok());
    }

    #[test]
    fn duplicate_task_ids_are_rejected() {
        assert!(matches!(TaskSet::new([task("a"), task("a")]), Err(DomainError::DuplicateTask(_))));
    }

    #[test]
    fn blank_question_is_absent() {
        let tasks = TaskSet::new([task("fact")]).unwrap();
        let req = tasks
            .bind(RequestSnapshot {
                student_id: "s".into(),
                task_id: "fact".into(),
                source_code: String::new(),
                text_input: Some("   \n".into()),
                mastery: MasteryLevel::Low,
                help_count: 1,
                timestamp: Utc::now(),
            })
            .unwrap();
        assert_eq!(req.question(), None);
    }

    #[test]
    fn task_file_format_parses() {
        let json = r#"{"id":"fact","title":"Factorial","description":"d","topic":"recursion",
            "starter_code":"def factorial(n):\n    pass\n","sample_solution":"x","locale":"en",
            "tests":[{"id":"t1","call":{"function":"factorial","args":[3]},"expected":6,"comparison":"exact"},
                     {"id":"t2","call":{"function":"half","args":[1]},"expected":0.5,"comparison":"numeric","epsilon":1e-9}]}"#;
        let task: Task = serde_json::from_str(json).unwrap();
        assert_eq!(task.test_suite.len(), 2);
        assert_eq!(task.test_suite.cases()[1].comparison, Comparison::Numeric { epsilon: 1e-9 });
        assert_eq!(task.entry_function(), Some("factorial"));
        let bad = TestCase { comparison: Comparison::Numeric { epsilon: 0.0 }, ..task.test_suite.cases()[0].clone() };
        assert!(bad.check().is_err());
    }

    #[test]
    fn comparison_defaults_to_exact_and_round_trips() {
        let case: TestCase = serde_json::from_str(r#"{"id":"t","call":{"function":"f","args":[]},"expected":1}"#).unwrap();
        assert_eq!(case.comparison, Comparison::Exact);
        let numeric: TestCase = serde_json::from_str(
            r#"{"id":"t","call":{"function":"f"},"expected":0.5,"comparison":"numeric","epsilon":0.001}"#,
        )
        .unwrap();
        let back: TestCase = serde_json::from_value(serde_json::to_value(&numeric).unwrap()).unwrap();
        assert_eq!(back, numeric);
        let missing: TestCase =
            serde_json::from_str(r#"{"id":"t","call":{"function":"f"},"expected":0.5,"comparison":"numeric"}"#).unwrap();
        assert!(missing.check().is_err());
    }

    fn any_scenario() -> impl Strategy<Value = Scenario> {
        let mastery = prop_oneof![Just(MasteryLevel::Low), Just(MasteryLevel::High)];
        prop_oneof![
            Just(Scenario::Exploit),
            Just(Scenario::NoAttempt { strategy: NoAttemptStrategy::Motivational }),
            (1u32..=10).prop_map(|level| Scenario::NoAttempt {
                strategy: NoAttemptStrategy::GuidingQuestions { level }
            }),
            Just(Scenario::NoAttempt { strategy: NoAttemptStrategy::TargetedAssistance }),
            mastery.clone().prop_map(|mastery| Scenario::Failing { mastery }),
            mastery.prop_map(|mastery| Scenario::Passing { mastery }),
        ]
    }

    proptest! {
        #[test]
        fn scenario_round_trips(scenario in any_scenario()) {
            let json = serde_json::to_string(&scenario).unwrap();
            let back: Scenario = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, scenario);
        }

        #[test]
        fn mastery_resolution_is_pure(solved in proptest::collection::vec(any::<bool>(), 0..8)) {
            let mut profile = StudentProfile::new("s");
            profile.history = solved.iter().enumerate().map(|(i, s)| record(&format!("t{i}"), *s)).collect();
            prop_assert_eq!(resolve_mastery(&profile, "recursion"), resolve_mastery(&profile.clone(), "recursion"));
        }
    }
}
