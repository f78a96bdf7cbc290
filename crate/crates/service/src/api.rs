//! HTTP/JSON API.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use pedafeed_core::analytics::{group_entries, stats_report, CorpusEntry, RatingRecord, StatsReport};
use pedafeed_core::domain::{resolve_mastery, MasteryLevel, RequestSnapshot, Scenario, Task, TestCase};
use pedafeed_core::error::{AgentError, DomainError, PipelineError, RunnerError};
use pedafeed_core::pipeline::Pipeline;
use pedafeed_core::quorum::IterationRecord;
use pedafeed_core::runner::{Overall, TestReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{HistoryEntry, RatingError, SessionEvent, SessionState, Store, StoreError};

#[derive(Debug, Clone)]
pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub store: Arc<Store>,
    pub corpus_seed: u64,
    pub debug: bool,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/run", post(run))
        .route("/api/feedback", post(feedback))
        .route("/api/sessions/{student_id}", get(session))
        .route("/api/sessions/{student_id}/reset", post(reset))
        .route("/api/corpus/{group}", get(corpus_group))
        .route("/api/responses/{entry_id}", get(response_text))
        .route("/api/ratings", post(add_rating))
        .route("/api/stats", get(stats))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    trace_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), trace_id: None }
    }

    fn traced(mut self, trace_id: &str) -> Self {
        self.trace_id = Some(trace_id.to_string());
        self
    }

    fn unknown_task(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown task `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(trace_id) = self.trace_id {
            body["trace_id"] = json!(trace_id);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        tracing::error!("storage failure: {err}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(err: PipelineError) -> Self {
        let status = match &err {
            PipelineError::Domain(DomainError::UnknownTask(_)) => StatusCode::NOT_FOUND,
            PipelineError::Domain(_) => StatusCode::UNPROCESSABLE_ENTITY,
            PipelineError::Runner(RunnerError::SandboxUnavailable(_)) => StatusCode::SERVICE_UNAVAILABLE,
            PipelineError::Agent(AgentError::Gateway(_) | AgentError::Parse(_)) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, err.to_string())
    }
}

/// JSON body whose every decoding failure is a 422.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
        serde_json::from_slice(&bytes)
            .map(Body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed body: {e}")))
    }
}

fn require_id(value: &str, field: &str) -> Result<(), ApiError> {
    if value.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{field} must not be empty")));
    }
    Ok(())
}

impl AppState {
    fn task(&self, id: &str) -> Result<&Task, ApiError> {
        self.pipeline.tasks.get(id).ok_or_else(|| ApiError::unknown_task(id))
    }
}

/// What students see of a task: no sample solution.
#[derive(Debug, Serialize, Deserialize)]
pub struct TaskView {
    pub id: String,
    pub title: String,
    pub description: String,
    pub topic: String,
    pub starter_code: String,
    pub locale: String,
    pub tests: Vec<TestCase>,
}

async fn list_tasks(State(state): State<AppState>) -> Json<Vec<TaskView>> {
    Json(
        state
            .pipeline
            .tasks
            .iter()
            .map(|t| TaskView {
                id: t.id.clone(),
                title: t.title.clone(),
                description: t.description.clone(),
                topic: t.topic.clone(),
                starter_code: t.starter_code.clone(),
                locale: t.locale.clone(),
                tests: t.test_suite.cases().to_vec(),
            })
            .collect(),
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBody {
    pub student_id: String,
    pub task_id: String,
    pub source_code: String,
}

async fn run(State(state): State<AppState>, Body(body): Body<RunBody>) -> Result<Json<TestReport>, ApiError> {
    require_id(&body.student_id, "student_id")?;
    let task = state.task(&body.task_id)?;
    let _guard = state.store.lock_student(&body.student_id).await;
    let report = state.pipeline.run(&body.task_id, &body.source_code).await?;
    state.store.save_code(&body.student_id, &body.task_id, &body.source_code)?;
    if report.overall != Overall::NotRunnable {
        state.store.record_solve(&body.student_id, task, report.overall == Overall::AllPassed)?;
    }
    Ok(Json(report))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    pub student_id: String,
    pub task_id: String,
    pub source_code: String,
    #[serde(default)]
    pub text_input: Option<String>,
    /// Overrides the mastery derived from the student's history.
    #[serde(default)]
    pub mastery: Option<MasteryLevel>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Validation {
    pub validation_passed: bool,
    pub approvals: u32,
    pub iteration: u32,
    pub exhausted: bool,
    pub safe_hint_used: bool,
    pub validator_critiques: Vec<String>,
    pub quorum_history: Vec<IterationRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub trace_id: String,
    pub help_count: u32,
    pub scenario: Scenario,
    pub mastery: MasteryLevel,
    pub message: String,
    pub report: Option<TestReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<Validation>,
}

async fn feedback(
    State(state): State<AppState>,
    Body(body): Body<FeedbackBody>,
) -> Result<Json<FeedbackResponse>, ApiError> {
    require_id(&body.student_id, "student_id")?;
    let task = state.task(&body.task_id)?;
    let trace_id = uuid::Uuid::new_v4().to_string();
    let question = body.text_input.filter(|q| !q.trim().is_empty());

    let _guard = state.store.lock_student(&body.student_id).await;
    let help_count = state.store.bump_help(&body.student_id, &body.task_id)?;
    state.store.save_code(&body.student_id, &body.task_id, &body.source_code)?;
    let session = state.store.session(&body.student_id).unwrap_or_default();
    let mastery = body.mastery.unwrap_or_else(|| resolve_mastery(&session.profile, &task.topic));
    let snapshot = RequestSnapshot {
        student_id: body.student_id.clone(),
        task_id: body.task_id.clone(),
        source_code: body.source_code,
        text_input: question.clone(),
        mastery,
        help_count,
        timestamp: Utc::now(),
    };
    let history = session.exchanges(&body.task_id);
    let outcome = state.pipeline.handle(snapshot, &history, &trace_id, None).await.map_err(|e| {
        tracing::warn!(trace_id, "feedback failed: {e}");
        ApiError::from(e).traced(&trace_id)
    })?;

    if let Some(report) = outcome.report.as_ref().filter(|r| r.overall != Overall::NotRunnable) {
        state.store.record_solve(&body.student_id, task, report.overall == Overall::AllPassed)?;
    }
    state.store.record(SessionEvent::Feedback {
        student_id: body.student_id,
        entry: HistoryEntry {
            task_id: body.task_id,
            request_id: trace_id.clone(),
            question,
            message: outcome.message.clone(),
            at: Utc::now(),
        },
    })?;

    let validation = state.debug.then(|| Validation {
        validation_passed: outcome.message.validation_passed,
        approvals: outcome.message.approvals,
        iteration: outcome.message.iteration,
        exhausted: outcome.exhausted,
        safe_hint_used: outcome.safe_hint_used,
        validator_critiques: outcome.message.validator_critiques.clone(),
        quorum_history: outcome.quorum_history.clone(),
    });
    Ok(Json(FeedbackResponse {
        trace_id,
        help_count,
        scenario: outcome.scenario,
        mastery,
        message: outcome.message.text,
        report: outcome.report,
        validation,
    }))
}

async fn session(State(state): State<AppState>, Path(student_id): Path<String>) -> Result<Json<SessionState>, ApiError> {
    state
        .store
        .session(&student_id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session for `{student_id}`")))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetBody {
    #[serde(default)]
    pub task_id: Option<String>,
}

async fn reset(
    State(state): State<AppState>,
    Path(student_id): Path<String>,
    raw: Bytes,
) -> Result<StatusCode, ApiError> {
    let body: ResetBody = if raw.iter().all(u8::is_ascii_whitespace) {
        ResetBody::default()
    } else {
        serde_json::from_slice(&raw)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed body: {e}")))?
    };
    let _guard = state.store.lock_student(&student_id).await;
    state.store.record(SessionEvent::Reset { student_id, task_id: body.task_id, at: Utc::now() })?;
    Ok(StatusCode::NO_CONTENT)
}

/// A corpus entry as shown before the rater reveals the response.
#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusItem {
    pub entry_id: String,
    pub task_id: String,
    pub source_code: String,
    pub question: Option<String>,
    /// "Weak", "Strong" or "No Coding Attempt".
    pub mastery_label: String,
}

impl From<&CorpusEntry> for CorpusItem {
    fn from(entry: &CorpusEntry) -> Self {
        Self {
            entry_id: entry.entry_id.clone(),
            task_id: entry.request.task_id.clone(),
            source_code: entry.request.source_code.clone(),
            question: entry.request.text_input.clone(),
            mastery_label: entry.scenario.rating_label().to_string(),
        }
    }
}

async fn corpus_group(State(state): State<AppState>, Path(group): Path<String>) -> Result<Json<Vec<CorpusItem>>, ApiError> {
    let group: u32 = group
        .parse()
        .map_err(|_| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("group must be a positive integer, got `{group}`")))?;
    let corpus = state.store.corpus();
    let items: Vec<CorpusItem> = group_entries(&corpus, group, state.corpus_seed).into_iter().map(CorpusItem::from).collect();
    if items.is_empty() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("group {group} has no entries")));
    }
    Ok(Json(items))
}

async fn response_text(
    State(state): State<AppState>,
    Path(entry_id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let entry = state
        .store
        .corpus_entry(&entry_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no corpus entry `{entry_id}`")))?;
    Ok(Json(json!({ "entry_id": entry.entry_id, "response": entry.response.text })))
}

async fn add_rating(State(state): State<AppState>, Body(rating): Body<RatingRecord>) -> Result<Response, ApiError> {
    state.store.add_rating(rating.clone()).map_err(|e| {
        let status = match e {
            RatingError::Duplicate { .. } => StatusCode::CONFLICT,
            RatingError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            RatingError::UnknownResponse(_) => StatusCode::NOT_FOUND,
            RatingError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    })?;
    Ok((StatusCode::CREATED, Json(rating)).into_response())
}

async fn stats(State(state): State<AppState>) -> Json<StatsReport> {
    Json(stats_report(&state.store.ratings(), &state.store.corpus()))
}
