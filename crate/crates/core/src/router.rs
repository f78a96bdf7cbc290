//! Maps a help request to exactly one pedagogical scenario.

use crate::domain::{HelpRequest, NoAttemptStrategy, Scenario};
use crate::error::RoutingError;
use crate::runner::{Overall, TestReport};

/// Guiding-question levels above this share the most specific prompt.
pub const MAX_GUIDANCE_LEVEL: u32 = 5;

#[derive(Debug, Clone)]
pub struct RoutingInput<'a> {
    pub request: &'a HelpRequest,
    /// `None` exactly when the source is not a coding attempt.
    pub report: Option<&'a TestReport>,
    pub exploit: bool,
}

/// Exploitation dominates; otherwise the progress state picks the branch and
/// mastery or help-seeking context picks the variant.
pub fn route(input: &RoutingInput<'_>) -> Result<Scenario, RoutingError> {
    if input.exploit {
        return Ok(Scenario::Exploit);
    }
    let request = input.request;
    let Some(report) = input.report else {
        let strategy = match (request.question(), request.help_count()) {
            (Some(_), _) => NoAttemptStrategy::TargetedAssistance,
            (None, 0 | 1) => NoAttemptStrategy::Motivational,
            (None, count) => NoAttemptStrategy::GuidingQuestions { level: count },
        };
        return Ok(Scenario::NoAttempt { strategy });
    };
    let mastery = request.mastery();
    match report.overall {
        Overall::AllPassed if report.compile_ok => Ok(Scenario::Passing { mastery }),
        Overall::AllPassed => Err(RoutingError::InconsistentInput("AllPassed report without compile_ok")),
        // A broken attempt is still an attempt.
        Overall::SomeFailed | Overall::NotRunnable => Ok(Scenario::Failing { mastery }),
    }
}

/// Routes while checking `report` against the attempt detector.
pub fn route_checked(
    request: &HelpRequest,
    starter_code: &str,
    report: Option<&TestReport>,
    exploit: bool,
) -> Result<Scenario, RoutingError> {
    let attempted = crate::runner::is_attempt(request.source_code(), starter_code);
    match (attempted, report.is_some()) {
        (false, true) => Err(RoutingError::InconsistentInput("report present but source is not an attempt")),
        (true, false) => Err(RoutingError::InconsistentInput("attempt without a test report")),
        _ => route(&RoutingInput { request, report, exploit }),
    }
}

/// Level used to pick the guiding-question prompt.
pub fn prompt_guidance_level(level: u32) -> u32 {
    level.clamp(1, MAX_GUIDANCE_LEVEL)
}
