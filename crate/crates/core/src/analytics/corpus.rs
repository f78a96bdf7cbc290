//! Frozen request/response pairs and evaluation groups.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mutation::Pattern;
use crate::domain::{FeedbackMessage, RequestSnapshot, Scenario};
use crate::error::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    /// Also the `response_id` raters refer to.
    pub entry_id: String,
    pub request: RequestSnapshot,
    pub response: FeedbackMessage,
    pub scenario: Scenario,
    #[serde(default)]
    pub group_id: Option<u32>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Pattern>,
}

pub fn write_jsonl<W: Write>(entries: &[CorpusEntry], mut out: W) -> std::io::Result<()> {
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads one entry per non-blank line. Errors carry the 1-based line number.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<CorpusEntry>, String> {
    let mut entries = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(entries)
}

/// Picks `total` corpus indices and splits them into `groups` disjoint groups
/// of equal size. Strata are scenario labels; each stratum contributes in
/// proportion to its size and is dealt round-robin across the groups.
pub fn sample_groups(
    corpus: &[CorpusEntry],
    total: usize,
    groups: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, AnalyticsError> {
    if groups == 0 || total % groups != 0 {
        return Err(AnalyticsError::Indivisible { total, groups });
    }
    if total > corpus.len() {
        return Err(AnalyticsError::CorpusTooSmall { available: corpus.len(), requested: total });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, entry) in corpus.iter().enumerate() {
        strata.entry(entry.scenario.label()).or_default().push(i);
    }
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
    }

    // Largest-remainder allocation of `total` across strata.
    let n = corpus.len();
    let mut quotas: Vec<(usize, usize)> = strata.values().map(|m| (total * m.len() / n, (total * m.len()) % n)).collect();
    let assigned: usize = quotas.iter().map(|q| q.0).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].1.cmp(&quotas[a].1).then(a.cmp(&b)));
    for &i in order.iter().take(total - assigned) {
        quotas[i].0 += 1;
    }

    let mut selected = Vec::with_capacity(total);
    for (members, (quota, _)) in strata.values().zip(&quotas) {
        selected.extend_from_slice(&members[..*quota]);
    }
    let mut assignment = vec![Vec::with_capacity(total / groups); groups];
    for (k, index) in selected.into_iter().enumerate() {
        assignment[k % groups].push(index);
    }
    Ok(assignment)
}

/// Writes 1-based group ids into the corpus; unsampled entries get none.
pub fn assign_groups(corpus: &mut [CorpusEntry], assignment: &[Vec<usize>]) {
    for entry in corpus.iter_mut() {
        entry.group_id = None;
    }
    for (g, members) in assignment.iter().enumerate() {
        for &i in members {
            corpus[i].group_id = Some(g as u32 + 1);
        }
    }
}

/// Entries of one group in a seeded random order.
pub fn group_entries(corpus: &[CorpusEntry], group: u32, seed: u64) -> Vec<&CorpusEntry> {
    let mut members: Vec<&CorpusEntry> = corpus.iter().filter(|e| e.group_id == Some(group)).collect();
    members.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ u64::from(group)));
    members
}
