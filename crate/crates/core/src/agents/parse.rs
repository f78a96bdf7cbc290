//! Parsers for the constrained agent output formats. All of them are total.

use super::{ErrorAnalysis, ExploitVerdict, Finding, Severity, ValidatorVerdict};

pub const PARSE_FALLBACK: &str = "parse-fallback";

/// Leading word of `text`, uppercased, ignoring markdown decoration.
fn first_token(text: &str) -> (String, &str) {
    let trimmed = text.trim_start_matches(|c: char| !c.is_alphanumeric());
    let end = trimmed.find(|c: char| !c.is_alphabetic()).unwrap_or(trimmed.len());
    (trimmed[..end].to_ascii_uppercase(), &trimmed[end..])
}

fn rationale(rest: &str) -> String {
    rest.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ':' | '-' | '.' | ',' | '*'))
        .trim()
        .to_string()
}

/// `YES`/`NO` first token; anything else is treated as not exploitation.
pub fn parse_exploit_verdict(text: &str) -> ExploitVerdict {
    let (token, rest) = first_token(text);
    match token.as_str() {
        "YES" => ExploitVerdict { exploit: true, reason: rationale(rest) },
        "NO" => ExploitVerdict { exploit: false, reason: rationale(rest) },
        _ => ExploitVerdict { exploit: false, reason: PARSE_FALLBACK.to_string() },
    }
}

/// `APPROVE`/`REJECT` first token; anything else is a flagged rejection.
pub fn parse_validator_verdict(text: &str) -> ValidatorVerdict {
    let (token, rest) = first_token(text);
    match token.as_str() {
        "APPROVE" | "APPROVED" => ValidatorVerdict { approved: true, critique: rationale(rest), parse_fallback: false },
        "REJECT" | "REJECTED" => ValidatorVerdict { approved: false, critique: rationale(rest), parse_fallback: false },
        _ => ValidatorVerdict { approved: false, critique: text.trim().to_string(), parse_fallback: true },
    }
}

fn parse_severity(text: &str) -> Severity {
    if text.trim().to_ascii_lowercase().starts_with("minor") {
        Severity::Minor
    } else {
        Severity::Fundamental
    }
}

/// Reads `FINDING | location | severity | defect` lines plus a `SUMMARY:` line.
/// Returns `None` when neither a finding, `NO FINDINGS`, nor a summary is present.
pub fn parse_analysis(text: &str) -> Option<ErrorAnalysis> {
    let mut findings = Vec::new();
    let mut summary = None;
    let mut explicit_none = false;
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*', ' ']);
        let upper = line.to_ascii_uppercase();
        if upper.starts_with("FINDING") && line.contains('|') {
            let parts: Vec<&str> = line.splitn(4, '|').map(str::trim).collect();
            if parts.len() == 4 && !parts[3].is_empty() {
                findings.push(Finding {
                    location: parts[1].to_string(),
                    severity: parse_severity(parts[2]),
                    defect: parts[3].to_string(),
                });
            }
        } else if upper.starts_with("SUMMARY") {
            summary = Some(rationale(&line["SUMMARY".len()..]));
        } else if upper.starts_with("NO FINDINGS") {
            explicit_none = true;
        }
    }
    if findings.is_empty() && summary.is_none() && !explicit_none {
        return None;
    }
    Some(ErrorAnalysis { findings, summary: summary.unwrap_or_default() })
}
