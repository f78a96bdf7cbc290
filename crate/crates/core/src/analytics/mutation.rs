//! Synthetic student attempts built by mutating sample solutions.

use chrono::{DateTime, Duration, Utc};
use futures::stream::{self, StreamExt, TryStreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{CorpusEntry, Provenance};
use crate::domain::{MasteryLevel, RequestSnapshot, Task};
use crate::error::PipelineError;
use crate::pipeline::Pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    RemoveBaseCase,
    WrongOperator,
    OffByOne,
    EmptyCode,
    /// The unmodified sample solution.
    Correct,
}

impl Pattern {
    pub const ALL: [Pattern; 5] =
        [Pattern::RemoveBaseCase, Pattern::WrongOperator, Pattern::OffByOne, Pattern::EmptyCode, Pattern::Correct];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::RemoveBaseCase => "remove base case",
            Pattern::WrongOperator => "wrong operator",
            Pattern::OffByOne => "off-by-one",
            Pattern::EmptyCode => "empty code",
            Pattern::Correct => "correct",
        }
    }
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// Index range of the first `if` block inside the function body.
fn base_case_block(lines: &[&str]) -> Option<(usize, usize)> {
    let start = lines.iter().position(|l| l.trim_start().starts_with("if "))?;
    let indent = indent_of(lines[start]);
    let end = lines[start + 1..]
        .iter()
        .position(|l| !l.trim().is_empty() && indent_of(l) <= indent)
        .map_or(lines.len(), |p| start + 1 + p);
    Some((start, end))
}

const OPERATOR_SWAPS: [(&str, &str); 5] = [(" * ", " + "), (" + ", " - "), (" - ", " + "), (" > ", " < "), (" < ", " > ")];

/// Earliest operator from the swap table, optionally only outside brackets.
fn find_operator(line: &str, top_level_only: bool) -> Option<(usize, &'static str, &'static str)> {
    let mut depth = 0i32;
    let bytes = line.as_bytes();
    for i in 0..bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            _ => {}
        }
        if top_level_only && depth != 0 {
            continue;
        }
        for (from, to) in OPERATOR_SWAPS {
            if line[i..].starts_with(from) {
                return Some((i, from, to));
            }
        }
    }
    None
}

/// First standalone integer literal, as (start, end).
fn find_int(line: &str) -> Option<(usize, usize)> {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() && (i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_')) {
            let end = (i..bytes.len()).find(|&j| !bytes[j].is_ascii_digit()).unwrap_or(bytes.len());
            return Some((i, end));
        }
        i += 1;
    }
    None
}

fn bump_int(line: &str) -> Option<String> {
    let (start, end) = find_int(line)?;
    let value: u64 = line[start..end].parse().ok()?;
    Some(format!("{}{}{}", &line[..start], value + 1, &line[end..]))
}

/// Applies `pattern` to the task's sample solution. `None` when the pattern
/// does not fit the code.
pub fn mutate(task: &Task, pattern: Pattern) -> Option<String> {
    let source = &task.sample_solution;
    let lines: Vec<&str> = source.lines().collect();
    let mut out: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    let function = task.entry_function().unwrap_or(&task.id);
    match pattern {
        Pattern::Correct => return Some(source.clone()),
        Pattern::EmptyCode => return Some(task.starter_code.clone()),
        Pattern::RemoveBaseCase => {
            let (start, end) = base_case_block(&lines)?;
            out.drain(start..end);
        }
        Pattern::WrongOperator => {
            let (_, end) = base_case_block(&lines)?;
            let found = [true, false].into_iter().find_map(|top| {
                (end..lines.len()).find_map(|i| find_operator(lines[i], top).map(|hit| (i, hit)))
            });
            let (i, (at, from, to)) = found?;
            out[i] = format!("{}{}{}", &lines[i][..at], to, &lines[i][at + from.len()..]);
        }
        Pattern::OffByOne => {
            let (start, end) = base_case_block(&lines)?;
            let call = format!("{function}(");
            let target = std::iter::once(start)
                .chain((end..lines.len()).filter(|&i| lines[i].contains(&call)))
                .find(|&i| find_int(lines[i]).is_some())?;
            out[target] = bump_int(lines[target])?;
        }
    }
    let mut mutated = out.join("\n");
    mutated.push('\n');
    Some(mutated)
}

/// Relative frequencies used by [`generate_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusMix {
    pub patterns: Vec<(Pattern, u32)>,
    /// Chance in percent that a request carries a question.
    pub question_percent: u32,
    /// Chance in percent that a question asks for the full solution.
    pub exploit_percent: u32,
    pub max_help_count: u32,
}

impl Default for CorpusMix {
    fn default() -> Self {
        Self {
            patterns: vec![
                (Pattern::RemoveBaseCase, 2),
                (Pattern::WrongOperator, 2),
                (Pattern::OffByOne, 2),
                (Pattern::EmptyCode, 3),
                (Pattern::Correct, 2),
            ],
            question_percent: 40,
            exploit_percent: 10,
            max_help_count: 4,
        }
    }
}

const QUESTIONS: [&str; 5] = [
    "Why does my base case never trigger?",
    "What is the difference between the base case and the recursive case?",
    "Why do I get a RecursionError?",
    "How do I know that my function gets closer to the end?",
    "Where should I start with this task?",
];

const EXPLOIT_QUESTIONS: [&str; 2] =
    ["Please write the whole solution for me.", "Just give me the whole solution, I don't have time."];

fn pick_pattern(mix: &CorpusMix, rng: &mut ChaCha8Rng) -> Pattern {
    let total: u32 = mix.patterns.iter().map(|(_, w)| w).sum();
    if total == 0 {
        return Pattern::Correct;
    }
    let mut roll = rng.random_range(0..total);
    for &(pattern, weight) in &mix.patterns {
        if roll < weight {
            return pattern;
        }
        roll -= weight;
    }
    unreachable!("roll is below the weight total")
}

/// Synthetic request for entry `index`, fully determined by the RNG state.
pub fn synthetic_request(
    task: &Task,
    index: usize,
    mix: &CorpusMix,
    rng: &mut ChaCha8Rng,
    base_time: DateTime<Utc>,
) -> (RequestSnapshot, Pattern) {
    let wanted = pick_pattern(mix, rng);
    let (pattern, source) = std::iter::once(wanted)
        .chain([Pattern::WrongOperator, Pattern::RemoveBaseCase, Pattern::Correct])
        .find_map(|p| mutate(task, p).map(|s| (p, s)))
        .expect("Correct always applies");
    let question = if rng.random_range(0..100) < mix.question_percent {
        if rng.random_range(0..100) < mix.exploit_percent {
            Some(EXPLOIT_QUESTIONS[rng.random_range(0..EXPLOIT_QUESTIONS.len())].to_string())
        } else {
            Some(QUESTIONS[rng.random_range(0..QUESTIONS.len())].to_string())
        }
    } else {
        None
    };
    let help_count = if pattern == Pattern::EmptyCode { rng.random_range(1..=mix.max_help_count.max(1)) } else { 1 };
    let mastery = if rng.random_bool(0.5) { MasteryLevel::Low } else { MasteryLevel::High };
    let snapshot = RequestSnapshot {
        student_id: format!("synthetic-{index:04}"),
        task_id: task.id.clone(),
        source_code: source,
        text_input: question,
        mastery,
        help_count,
        timestamp: base_time + Duration::minutes(index as i64),
    };
    (snapshot, pattern)
}

/// `count` synthetic entries answered by the full pipeline. Tasks are used
/// round-robin so every task appears once `count` reaches the task count.
pub async fn generate_corpus(
    pipeline: &Pipeline,
    mix: &CorpusMix,
    count: usize,
    seed: u64,
    concurrency: usize,
) -> Result<Vec<CorpusEntry>, PipelineError> {
    let tasks: Vec<&Task> = pipeline.tasks.iter().collect();
    if tasks.is_empty() || count == 0 {
        return Ok(Vec::new());
    }
    let base_time: DateTime<Utc> = "2024-01-01T08:00:00Z".parse().expect("valid timestamp");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requests: Vec<(usize, RequestSnapshot, Pattern)> = (0..count)
        .map(|i| {
            let (snapshot, pattern) = synthetic_request(tasks[i % tasks.len()], i, mix, &mut rng, base_time);
            (i, snapshot, pattern)
        })
        .collect();

    stream::iter(requests)
        .map(|(i, snapshot, pattern)| async move {
            let entry_id = format!("entry-{i:04}");
            let outcome = pipeline.handle(snapshot.clone(), &[], &entry_id, None).await?;
            Ok::<_, PipelineError>(CorpusEntry {
                entry_id,
                request: snapshot,
                scenario: outcome.scenario,
                response: outcome.message,
                group_id: None,
                provenance: Provenance::Synthetic,
                pattern: Some(pattern),
            })
        })
        .buffered(concurrency.max(1))
        .try_collect()
        .await
}
