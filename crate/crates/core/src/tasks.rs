//! Task files: one JSON document per task.

use std::collections::BTreeSet;
use std::path::Path;

use crate::domain::{Task, TaskSet};
use crate::error::TaskError;
use crate::runner::{is_attempt, Overall, Sandbox};

const SHIPPED: [(&str, &str); 10] = [
    ("factorial.json", include_str!("../tasks/factorial.json")),
    ("fibonacci.json", include_str!("../tasks/fibonacci.json")),
    ("power.json", include_str!("../tasks/power.json")),
    ("sum_digits.json", include_str!("../tasks/sum_digits.json")),
    ("sum_list.json", include_str!("../tasks/sum_list.json")),
    ("reverse_string.json", include_str!("../tasks/reverse_string.json")),
    ("count_down.json", include_str!("../tasks/count_down.json")),
    ("gcd.json", include_str!("../tasks/gcd.json")),
    ("count_char.json", include_str!("../tasks/count_char.json")),
    ("list_max.json", include_str!("../tasks/list_max.json")),
];

pub fn parse_task(name: &str, text: &str) -> Result<Task, TaskError> {
    serde_json::from_str(text).map_err(|e| TaskError::Parse { path: name.to_string(), reason: e.to_string() })
}

/// The ten recursion exercises bundled with the crate.
pub fn shipped_tasks() -> Vec<Task> {
    SHIPPED.iter().map(|(name, text)| parse_task(name, text).expect("shipped task parses")).collect()
}

/// Reads every `*.json` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Task>, TaskError> {
    let io = |e: std::io::Error| TaskError::Io { path: dir.display().to_string(), reason: e.to_string() };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path)
                .map_err(|e| TaskError::Io { path: path.display().to_string(), reason: e.to_string() })?;
            parse_task(&path.display().to_string(), &text)
        })
        .collect()
}

/// Checks that need no interpreter.
pub fn structural_violations(task: &Task) -> Vec<String> {
    let mut found = Vec::new();
    if task.test_suite.is_empty() {
        found.push("empty test suite".to_string());
    }
    let mut ids = BTreeSet::new();
    for case in task.test_suite.cases() {
        if !ids.insert(case.id.as_str()) {
            found.push(format!("duplicate test id `{}`", case.id));
        }
        if let Err(err) = case.check() {
            found.push(err.to_string());
        }
    }
    if !is_attempt(&task.sample_solution, &task.starter_code) {
        found.push("sample solution is indistinguishable from the starter code".to_string());
    }
    found
}

/// All violations, including running the sample solution against the suite.
pub async fn validate_task(task: &Task, sandbox: &Sandbox) -> Result<Vec<String>, TaskError> {
    let mut found = structural_violations(task);
    if task.test_suite.is_empty() {
        return Ok(found);
    }
    let report = sandbox.run_attempt(&task.sample_solution, &task.test_suite).await?;
    if report.overall != Overall::AllPassed {
        let failing: Vec<&str> = report.failures().map(|r| r.test_id.as_str()).collect();
        found.push(format!("solution fails suite ({})", failing.join(", ")));
    }
    Ok(found)
}

/// Loads tasks and rejects the first invalid one.
pub async fn validated_task_set(tasks: Vec<Task>, sandbox: &Sandbox) -> Result<TaskSet, TaskError> {
    for task in &tasks {
        let violations = validate_task(task, sandbox).await?;
        if !violations.is_empty() {
            return Err(TaskError::Invalid { task_id: task.id.clone(), violations });
        }
    }
    Ok(TaskSet::new(tasks)?)
}
