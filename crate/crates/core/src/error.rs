use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("duplicate task id `{0}`")]
    DuplicateTask(String),
    #[error("help_count must be at least 1")]
    InvalidHelpCount,
    #[error("guiding-question level must be at least 1")]
    InvalidGuidanceLevel,
    #[error("test `{test_id}`: numeric comparison requires epsilon > 0")]
    InvalidEpsilon { test_id: String },
    #[error("unknown mastery level `{0}`")]
    UnknownMastery(String),
    #[error("unknown agent role `{0}`")]
    UnknownRole(String),
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("test suite is empty")]
    EmptySuite,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("inconsistent routing input: {0}")]
    InconsistentInput(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("provider call timed out after {0} ms")]
    Timeout(u64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider refused the request with status {status}: {body}")]
    ProviderRefusal { status: u16, body: String },
    #[error("mock script has no rule for agent role `{role}`")]
    MockScriptMiss { role: String },
    #[error("invalid chat request: {0}")]
    InvalidRequest(&'static str),
    #[error("invalid provider configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors worth another attempt.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{name}` is missing")]
    Missing { name: String },
    #[error("template `{name}` uses unknown placeholder `{placeholder}`")]
    UnknownPlaceholder { name: String, placeholder: String },
    #[error("template `{name}` lacks required placeholder `{placeholder}`")]
    MissingPlaceholder { name: String, placeholder: String },
    #[error("template `{name}` has no `---` separator between system and user text")]
    NoSeparator { name: String },
    #[error("cannot read template `{name}`: {reason}")]
    Io { name: String, reason: String },
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("error analysis is required for failing scenarios")]
    MissingAnalysis,
    #[error("could not parse expert output: {0}")]
    Parse(String),
    #[error("error analysis requested for a passing attempt")]
    NothingToAnalyze,
    #[error("candidate text is empty")]
    EmptyCandidate,
    #[error("scenario `{0}` is answered without a teacher agent")]
    NoTeacherTemplate(String),
    #[error(transparent)]
    Quorum(#[from] QuorumConfigError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuorumConfigError {
    #[error("validators must be at least 1")]
    NoValidators,
    #[error("approvals_required must be in [1, {validators}], got {approvals}")]
    Approvals { approvals: u32, validators: u32 },
    #[error("max_iterations must be at least 1")]
    NoIterations,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("Likert value {0} is outside 1..=5")]
    OutOfRange(i64),
    #[error("selection is empty")]
    EmptySelection,
    #[error("disagreement needs at least two ratings")]
    TooFewRaters,
    #[error("total {total} is not divisible into {groups} groups")]
    Indivisible { total: usize, groups: usize },
    #[error("corpus has {available} entries, {requested} requested")]
    CorpusTooSmall { available: usize, requested: usize },
    #[error("invalid rating: {0}")]
    InvalidRating(String),
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("cannot read `{path}`: {reason}")]
    Io { path: String, reason: String },
    #[error("cannot parse `{path}`: {reason}")]
    Parse { path: String, reason: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("task `{task_id}` is invalid: {}", violations.join("; "))]
    Invalid { task_id: String, violations: Vec<String> },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<GatewayError> for PipelineError {
    fn from(err: GatewayError) -> Self {
        PipelineError::Agent(AgentError::Gateway(err))
    }
}
