//! Deterministic snippet-policy checks applied to every candidate before it
//! reaches the validators and again before delivery.

use crate::domain::{Scenario, Task};
use crate::runner::normalize_source;

pub fn has_code_block(text: &str) -> bool {
    text.contains("```") || text.contains("~~~")
}

/// True when the candidate contains the sample solution, comments and
/// whitespace ignored.
pub fn reveals_solution(text: &str, task: &Task) -> bool {
    let solution = normalize_source(&task.sample_solution);
    if solution.is_empty() {
        return false;
    }
    let candidate = normalize_source(text);
    if candidate.contains(&solution) {
        return true;
    }
    // Code blocks are compared on their own so surrounding prose cannot hide a match.
    code_blocks(text).iter().any(|block| normalize_source(block).contains(&solution))
}

fn code_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```") || line.trim_start().starts_with("~~~");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    blocks
}

/// Violations of the scenario's snippet policy; empty when the text complies.
pub fn violations(scenario: &Scenario, text: &str, task: &Task) -> Vec<String> {
    let mut found = Vec::new();
    match scenario {
        Scenario::Failing { mastery: crate::domain::MasteryLevel::High } => {
            if has_code_block(text) {
                found.push("Contains a code snippet; this student should only get broader hints without code.".into());
            }
        }
        Scenario::NoAttempt { .. } | Scenario::Exploit => {
            if has_code_block(text) {
                found.push("Contains code although only high-level information may be given before a first attempt.".into());
            }
        }
        _ => {}
    }
    if !matches!(scenario, Scenario::Passing { .. }) && reveals_solution(text, task) {
        found.push("Reveals the complete solution of an unsolved task.".into());
    }
    found
}
