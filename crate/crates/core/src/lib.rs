//! Scenario-routed feedback generation for programming exercises: sandboxed
//! test execution, LLM agents behind a validator quorum, and the analytics
//! used to evaluate the responses.

pub mod agents;
pub mod analytics;
pub mod domain;
pub mod error;
pub mod gateway;
pub mod pipeline;
pub mod quorum;
pub mod router;
pub mod runner;
pub mod tasks;

pub use domain::{FeedbackMessage, HelpRequest, MasteryLevel, RequestSnapshot, Scenario, Task, TaskSet};
pub use pipeline::{Pipeline, PipelineOutcome};
pub use quorum::{QuorumConfig, QuorumResult};
pub use runner::{Sandbox, TestReport};

/// Default scalar for statistics.
pub type Real = f64;
/// Rating summary in the default scalar.
pub type RatingSummary = analytics::Summary<f64>;
/// Rating summary in single precision.
pub type RatingSummary32 = analytics::Summary<f32>;
/// Exact rational scores, e.g. for disagreement.
pub type ExactScore = num_rational::Ratio<i64>;
