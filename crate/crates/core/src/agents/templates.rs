//! Prompt templates: plain-text files with `{{name}}` placeholders.
//!
//! Agent templates hold a system part and a user part separated by a line
//! containing only `---`. Message templates (`exploit_refusal`, `safe_hint`)
//! are a single text. Every file is checked at load time against the
//! placeholder set documented on [`TemplateKey::placeholders`].

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::{MasteryLevel, NoAttemptStrategy, Scenario};
use crate::error::TemplateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKey {
    ExploitDetector,
    ExpertProgrammer,
    Validator,
    TeacherMotivational,
    TeacherGuidingQuestions,
    TeacherTargetedAssistance,
    TeacherFailingLow,
    TeacherFailingHigh,
    TeacherPassingLow,
    TeacherPassingHigh,
    ExploitRefusal,
    SafeHint,
}

const TEACHER_COMMON: &[&str] = &["task_title", "task_description", "source_code", "question"];

impl TemplateKey {
    pub const ALL: [TemplateKey; 12] = [
        TemplateKey::ExploitDetector,
        TemplateKey::ExpertProgrammer,
        TemplateKey::Validator,
        TemplateKey::TeacherMotivational,
        TemplateKey::TeacherGuidingQuestions,
        TemplateKey::TeacherTargetedAssistance,
        TemplateKey::TeacherFailingLow,
        TemplateKey::TeacherFailingHigh,
        TemplateKey::TeacherPassingLow,
        TemplateKey::TeacherPassingHigh,
        TemplateKey::ExploitRefusal,
        TemplateKey::SafeHint,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateKey::ExploitDetector => "exploit_detector.txt",
            TemplateKey::ExpertProgrammer => "expert_programmer.txt",
            TemplateKey::Validator => "validator.txt",
            TemplateKey::TeacherMotivational => "teacher_motivational.txt",
            TemplateKey::TeacherGuidingQuestions => "teacher_guiding_questions.txt",
            TemplateKey::TeacherTargetedAssistance => "teacher_targeted_assistance.txt",
            TemplateKey::TeacherFailingLow => "teacher_failing_low.txt",
            TemplateKey::TeacherFailingHigh => "teacher_failing_high.txt",
            TemplateKey::TeacherPassingLow => "teacher_passing_low.txt",
            TemplateKey::TeacherPassingHigh => "teacher_passing_high.txt",
            TemplateKey::ExploitRefusal => "exploit_refusal.txt",
            TemplateKey::SafeHint => "safe_hint.txt",
        }
    }

    fn embedded_english(self) -> &'static str {
        match self {
            TemplateKey::ExploitDetector => include_str!("../../templates/en/exploit_detector.txt"),
            TemplateKey::ExpertProgrammer => include_str!("../../templates/en/expert_programmer.txt"),
            TemplateKey::Validator => include_str!("../../templates/en/validator.txt"),
            TemplateKey::TeacherMotivational => include_str!("../../templates/en/teacher_motivational.txt"),
            TemplateKey::TeacherGuidingQuestions => include_str!("../../templates/en/teacher_guiding_questions.txt"),
            TemplateKey::TeacherTargetedAssistance => {
                include_str!("../../templates/en/teacher_targeted_assistance.txt")
            }
            TemplateKey::TeacherFailingLow => include_str!("../../templates/en/teacher_failing_low.txt"),
            TemplateKey::TeacherFailingHigh => include_str!("../../templates/en/teacher_failing_high.txt"),
            TemplateKey::TeacherPassingLow => include_str!("../../templates/en/teacher_passing_low.txt"),
            TemplateKey::TeacherPassingHigh => include_str!("../../templates/en/teacher_passing_high.txt"),
            TemplateKey::ExploitRefusal => include_str!("../../templates/en/exploit_refusal.txt"),
            TemplateKey::SafeHint => include_str!("../../templates/en/safe_hint.txt"),
        }
    }

    /// `(allowed, required)` placeholder names.
    pub fn placeholders(self) -> (Vec<&'static str>, Vec<&'static str>) {
        let mut allowed: Vec<&'static str> = Vec::new();
        let required: Vec<&'static str>;
        match self {
            TemplateKey::ExploitDetector => {
                allowed.extend(["task_title", "task_description", "source_code", "question"]);
                required = vec!["question"];
            }
            TemplateKey::ExpertProgrammer => {
                allowed.extend(["task_description", "sample_solution", "test_suite", "source_code", "failing_outcomes"]);
                required = vec!["sample_solution", "test_suite", "source_code", "failing_outcomes"];
            }
            TemplateKey::Validator => {
                allowed.extend(TEACHER_COMMON);
                allowed.extend(["scenario", "checklist", "candidate", "reviewer_index", "reviewer_count"]);
                required = vec!["checklist", "candidate"];
            }
            TemplateKey::TeacherGuidingQuestions => {
                allowed.extend(TEACHER_COMMON);
                allowed.extend(["guidance_level", "guidance_instructions"]);
                required = vec!["guidance_instructions"];
            }
            TemplateKey::TeacherTargetedAssistance => {
                allowed.extend(TEACHER_COMMON);
                allowed.push("history");
                required = vec!["question"];
            }
            TemplateKey::TeacherFailingLow | TemplateKey::TeacherFailingHigh => {
                allowed.extend(TEACHER_COMMON);
                allowed.extend(["test_results", "analysis"]);
                required = vec!["analysis"];
            }
            TemplateKey::TeacherMotivational | TemplateKey::TeacherPassingLow | TemplateKey::TeacherPassingHigh => {
                allowed.extend(TEACHER_COMMON);
                required = vec![];
            }
            TemplateKey::ExploitRefusal | TemplateKey::SafeHint => {
                allowed.push("task_title");
                required = vec![];
            }
        }
        (allowed, required)
    }

    pub fn is_message(self) -> bool {
        matches!(self, TemplateKey::ExploitRefusal | TemplateKey::SafeHint)
    }

    /// Teacher template for a scenario; `None` for the exploit branch, which
    /// answers with the fixed refusal message instead.
    pub fn for_scenario(scenario: &Scenario) -> Option<TemplateKey> {
        Some(match scenario {
            Scenario::Exploit => return None,
            Scenario::NoAttempt { strategy } => match strategy {
                NoAttemptStrategy::Motivational => TemplateKey::TeacherMotivational,
                NoAttemptStrategy::GuidingQuestions { .. } => TemplateKey::TeacherGuidingQuestions,
                NoAttemptStrategy::TargetedAssistance => TemplateKey::TeacherTargetedAssistance,
            },
            Scenario::Failing { mastery: MasteryLevel::Low } => TemplateKey::TeacherFailingLow,
            Scenario::Failing { mastery: MasteryLevel::High } => TemplateKey::TeacherFailingHigh,
            Scenario::Passing { mastery: MasteryLevel::Low } => TemplateKey::TeacherPassingLow,
            Scenario::Passing { mastery: MasteryLevel::High } => TemplateKey::TeacherPassingHigh,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    system: String,
    user: String,
}

impl Template {
    fn parse(key: TemplateKey, text: &str) -> Result<Self, TemplateError> {
        let name = key.file_name().to_string();
        let template = if key.is_message() {
            Template { system: String::new(), user: text.trim_end().to_string() }
        } else {
            let mut system = Vec::new();
            let mut user = Vec::new();
            let mut seen = false;
            for line in text.lines() {
                if !seen && line.trim() == "---" {
                    seen = true;
                } else if seen {
                    user.push(line);
                } else {
                    system.push(line);
                }
            }
            if !seen {
                return Err(TemplateError::NoSeparator { name });
            }
            Template { system: system.join("\n").trim().to_string(), user: user.join("\n").trim().to_string() }
        };
        let (allowed, required) = key.placeholders();
        let used: Vec<String> = placeholders(&template.system).into_iter().chain(placeholders(&template.user)).collect();
        if let Some(unknown) = used.iter().find(|p| !allowed.contains(&p.as_str())) {
            return Err(TemplateError::UnknownPlaceholder { name, placeholder: unknown.clone() });
        }
        if let Some(missing) = required.iter().find(|r| !used.iter().any(|u| u == *r)) {
            return Err(TemplateError::MissingPlaceholder { name, placeholder: missing.to_string() });
        }
        Ok(template)
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> (String, String) {
        (fill(&self.system, values), fill(&self.user, values))
    }

    pub fn render_message(&self, values: &BTreeMap<&str, String>) -> String {
        fill(&self.user, values)
    }
}

fn placeholders(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                found.push(after[..end].trim().to_string());
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    found
}

fn fill(text: &str, values: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return out;
        };
        let name = after[..end].trim();
        out.push_str(values.get(name).map(String::as_str).unwrap_or(""));
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    out
}

/// One template per key for a locale.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    locale: String,
    templates: BTreeMap<TemplateKey, Template>,
    fallbacks: Vec<TemplateKey>,
}

impl TemplateSet {
    /// The reference English set compiled into the binary.
    pub fn english() -> Self {
        let templates = TemplateKey::ALL
            .iter()
            .map(|&key| (key, Template::parse(key, key.embedded_english()).expect("embedded template is valid")))
            .collect();
        Self { locale: "en".into(), templates, fallbacks: Vec::new() }
    }

    /// Reads `<dir>/<locale>/<file>` for every key. Empty or missing slots of a
    /// non-English locale fall back to the embedded English template.
    pub fn load(dir: &Path, locale: &str) -> Result<Self, TemplateError> {
        let english = Self::english();
        let mut templates = BTreeMap::new();
        let mut fallbacks = Vec::new();
        for key in TemplateKey::ALL {
            let path = dir.join(locale).join(key.file_name());
            let text = match std::fs::read_to_string(&path) {
                Ok(text) => text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
                Err(e) => {
                    return Err(TemplateError::Io { name: key.file_name().into(), reason: e.to_string() });
                }
            };
            if text.trim().is_empty() {
                if locale == "en" {
                    return Err(TemplateError::Missing { name: key.file_name().into() });
                }
                tracing::warn!(locale, template = key.file_name(), "empty template slot, using English");
                fallbacks.push(key);
                templates.insert(key, english.templates[&key].clone());
            } else {
                templates.insert(key, Template::parse(key, &text)?);
            }
        }
        Ok(Self { locale: locale.into(), templates, fallbacks })
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    /// Keys served by the English fallback.
    pub fn fallbacks(&self) -> &[TemplateKey] {
        &self.fallbacks
    }

    pub fn get(&self, key: TemplateKey) -> &Template {
        &self.templates[&key]
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::english()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_set_is_complete() {
        let set = TemplateSet::english();
        for key in TemplateKey::ALL {
            let template = set.get(key);
            if !key.is_message() {
                assert!(!template.system.is_empty(), "{key:?}");
            }
            assert!(!template.user.is_empty(), "{key:?}");
        }
    }

    #[test]
    fn shipped_directories_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("templates");
        let en = TemplateSet::load(&dir, "en").unwrap();
        assert!(en.fallbacks().is_empty());
        let de = TemplateSet::load(&dir, "de").unwrap();
        assert_eq!(de.fallbacks().len(), TemplateKey::ALL.len());
        assert_eq!(de.get(TemplateKey::Validator), en.get(TemplateKey::Validator));
    }

    #[test]
    fn unknown_placeholder_is_rejected() {
        let err = Template::parse(TemplateKey::TeacherMotivational, "sys {{bogus}}\n---\nuser").unwrap_err();
        assert!(matches!(err, TemplateError::UnknownPlaceholder { .. }));
    }

    #[test]
    fn required_placeholder_is_enforced() {
        let err = Template::parse(TemplateKey::TeacherFailingLow, "sys\n---\n{{source_code}}").unwrap_err();
        assert!(matches!(err, TemplateError::MissingPlaceholder { .. }));
        let err = Template::parse(TemplateKey::TeacherFailingLow, "no separator {{analysis}}").unwrap_err();
        assert!(matches!(err, TemplateError::NoSeparator { .. }));
    }

    #[test]
    fn custom_locale_overrides_one_slot() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("de")).unwrap();
        std::fs::write(dir.path().join("de/safe_hint.txt"), "Schau dir \"{{task_title}}\" Schritt für Schritt an.").unwrap();
        let de = TemplateSet::load(dir.path(), "de").unwrap();
        assert_eq!(de.fallbacks().len(), TemplateKey::ALL.len() - 1);
        let mut values = BTreeMap::new();
        values.insert("task_title", "Fakultät".to_string());
        assert_eq!(de.get(TemplateKey::SafeHint).render_message(&values), "Schau dir \"Fakultät\" Schritt für Schritt an.");
    }

    #[test]
    fn every_scenario_has_one_teacher_template() {
        let mut scenarios = vec![
            Scenario::NoAttempt { strategy: NoAttemptStrategy::Motivational },
            Scenario::NoAttempt { strategy: NoAttemptStrategy::TargetedAssistance },
        ];
        scenarios.extend((1..=10).map(|level| Scenario::NoAttempt { strategy: NoAttemptStrategy::GuidingQuestions { level } }));
        for mastery in [MasteryLevel::Low, MasteryLevel::High] {
            scenarios.push(Scenario::Failing { mastery });
            scenarios.push(Scenario::Passing { mastery });
        }
        let set = TemplateSet::english();
        for scenario in &scenarios {
            let key = TemplateKey::for_scenario(scenario).expect("teacher template");
            assert!(set.templates.contains_key(&key));
        }
        assert_eq!(TemplateKey::for_scenario(&Scenario::Exploit), None);
        let distinct: std::collections::BTreeSet<_> =
            scenarios.iter().filter_map(TemplateKey::for_scenario).collect();
        assert_eq!(distinct.len(), 7);
    }
}
