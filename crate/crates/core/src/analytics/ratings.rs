//! Teacher ratings of pipeline responses.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use super::corpus::CorpusEntry;
use super::stats::{disagreement, format_percent, percent, summarize_likert, to_ternary, Summary, Ternary};
use crate::error::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Correctness {
    Yes,
    Partially,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum YesNo {
    Yes,
    No,
}

/// One teacher's answers for one response. Field order is the export column
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub rater_id: String,
    pub response_id: String,
    pub correctness: Correctness,
    pub pedagogically_sound: u8,
    pub comprehensive: u8,
    pub effective: u8,
    pub comparison_own: u8,
    pub needs_edits: YesNo,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PedagogicallySound,
    Comprehensive,
    Effective,
    ComparisonOwn,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::PedagogicallySound, Metric::Comprehensive, Metric::Effective, Metric::ComparisonOwn];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PedagogicallySound => "pedagogically_sound",
            Metric::Comprehensive => "comprehensive",
            Metric::Effective => "effective",
            Metric::ComparisonOwn => "comparison_own",
        }
    }
}

impl RatingRecord {
    pub fn likert(&self, metric: Metric) -> u8 {
        match metric {
            Metric::PedagogicallySound => self.pedagogically_sound,
            Metric::Comprehensive => self.comprehensive,
            Metric::Effective => self.effective,
            Metric::ComparisonOwn => self.comparison_own,
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.rater_id.trim().is_empty() {
            return Err(AnalyticsError::InvalidRating("rater_id is empty".into()));
        }
        if self.response_id.trim().is_empty() {
            return Err(AnalyticsError::InvalidRating("response_id is empty".into()));
        }
        for metric in Metric::ALL {
            let value = self.likert(metric);
            if !(1..=5).contains(&value) {
                return Err(AnalyticsError::InvalidRating(format!("{} must be in 1..=5, got {value}", metric.as_str())));
            }
        }
        Ok(())
    }

    pub fn ternary(&self, metric: Metric) -> Ternary {
        to_ternary(i64::from(self.likert(metric))).expect("validated record")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Rater,
    Response,
    Mastery,
    Overall,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [Grouping::Rater, Grouping::Response, Grouping::Mastery, Grouping::Overall];

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Rater => "rater",
            Grouping::Response => "response",
            Grouping::Mastery => "mastery",
            Grouping::Overall => "overall",
        }
    }
}

/// Mean, SD and count of `metric` per group. `mastery_of` maps a response id
/// to its rater-facing mastery label; unknown responses group as "unknown".
pub fn aggregate<F: Float + FromPrimitive>(
    ratings: &[RatingRecord],
    by: Grouping,
    metric: Metric,
    mastery_of: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, Summary<F>>, AnalyticsError> {
    if ratings.is_empty() {
        return Err(AnalyticsError::EmptySelection);
    }
    let mut groups: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for rating in ratings {
        let key = match by {
            Grouping::Rater => rating.rater_id.clone(),
            Grouping::Response => rating.response_id.clone(),
            Grouping::Mastery => mastery_of.get(&rating.response_id).cloned().unwrap_or_else(|| "unknown".into()),
            Grouping::Overall => "all".to_string(),
        };
        groups.entry(key).or_default().push(rating.likert(metric));
    }
    groups.into_iter().map(|(key, values)| Ok((key, summarize_likert(&values)?))).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessTally {
    pub yes: usize,
    pub partially: usize,
    pub no: usize,
}

impl CorrectnessTally {
    pub fn from_ratings(ratings: &[RatingRecord]) -> Self {
        let mut tally = Self::default();
        for rating in ratings {
            tally.add(rating.correctness);
        }
        tally
    }

    pub fn add(&mut self, value: Correctness) {
        match value {
            Correctness::Yes => self.yes += 1,
            Correctness::Partially => self.partially += 1,
            Correctness::No => self.no += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.yes + self.partially + self.no
    }

    pub fn percentages<F: Float + FromPrimitive>(&self) -> [F; 3] {
        let total = self.total();
        [percent(self.yes, total), percent(self.partially, total), percent(self.no, total)]
    }

    /// Yes / Partially / No shares with one decimal.
    pub fn formatted(&self) -> [String; 3] {
        self.percentages::<f64>().map(format_percent)
    }
}

/// Writes ratings as CSV, one row per record.
pub fn write_csv<W: std::io::Write>(ratings: &[RatingRecord], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for rating in ratings {
        writer.serialize(rating)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDisagreement {
    /// Mean over responses with at least two ratings.
    pub mean: Option<f64>,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub no_data: bool,
    pub ratings: usize,
    pub raters: usize,
    pub responses: usize,
    pub correctness: CorrectnessTally,
    pub correctness_percent: BTreeMap<String, String>,
    pub needs_edits: BTreeMap<String, usize>,
    /// metric -> grouping -> group key -> summary
    pub aggregates: BTreeMap<String, BTreeMap<String, BTreeMap<String, Summary<f64>>>>,
    /// group id (or "ungrouped") -> metric -> disagreement
    pub disagreement: BTreeMap<String, BTreeMap<String, MetricDisagreement>>,
}

/// Full analytics report over the ratings, using the corpus for mastery
/// labels and evaluation groups.
pub fn stats_report(ratings: &[RatingRecord], corpus: &[CorpusEntry]) -> StatsReport {
    let mastery_of: BTreeMap<String, String> =
        corpus.iter().map(|e| (e.entry_id.clone(), e.scenario.rating_label().to_string())).collect();
    let group_of: BTreeMap<&str, String> = corpus
        .iter()
        .map(|e| (e.entry_id.as_str(), e.group_id.map_or_else(|| "ungrouped".to_string(), |g| g.to_string())))
        .collect();

    let correctness = CorrectnessTally::from_ratings(ratings);
    let [yes, partially, no] = correctness.formatted();
    let mut report = StatsReport {
        no_data: ratings.is_empty(),
        ratings: ratings.len(),
        raters: ratings.iter().map(|r| &r.rater_id).collect::<std::collections::BTreeSet<_>>().len(),
        responses: ratings.iter().map(|r| &r.response_id).collect::<std::collections::BTreeSet<_>>().len(),
        correctness,
        correctness_percent: BTreeMap::from([("yes".into(), yes), ("partially".into(), partially), ("no".into(), no)]),
        needs_edits: BTreeMap::from([
            ("yes".into(), ratings.iter().filter(|r| r.needs_edits == YesNo::Yes).count()),
            ("no".into(), ratings.iter().filter(|r| r.needs_edits == YesNo::No).count()),
        ]),
        aggregates: BTreeMap::new(),
        disagreement: BTreeMap::new(),
    };
    if ratings.is_empty() {
        return report;
    }

    for metric in Metric::ALL {
        let per_grouping = report.aggregates.entry(metric.as_str().to_string()).or_default();
        for grouping in Grouping::ALL {
            let summaries = aggregate::<f64>(ratings, grouping, metric, &mastery_of).expect("non-empty");
            per_grouping.insert(grouping.as_str().to_string(), summaries);
        }
    }

    let mut by_response: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for rating in ratings {
        by_response.entry(rating.response_id.as_str()).or_default().push(rating);
    }
    let mut by_group: BTreeMap<String, Vec<&Vec<&RatingRecord>>> = BTreeMap::new();
    for (response, records) in &by_response {
        let group = group_of.get(response).cloned().unwrap_or_else(|| "ungrouped".to_string());
        by_group.entry(group).or_default().push(records);
    }
    for (group, responses) in by_group {
        let mut per_metric = BTreeMap::new();
        for metric in Metric::ALL {
            let scores: Vec<f64> = responses
                .iter()
                .filter_map(|records| {
                    let ternary: Vec<Ternary> = records.iter().map(|r| r.ternary(metric)).collect();
                    disagreement::<f64>(&ternary).ok()
                })
                .collect();
            let mean = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
            per_metric.insert(metric.as_str().to_string(), MetricDisagreement { mean, responses: scores.len() });
        }
        report.disagreement.insert(group, per_metric);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rating(rater: &str, response: &str, sound: u8) -> RatingRecord {
        RatingRecord {
            rater_id: rater.into(),
            response_id: response.into(),
            correctness: Correctness::Yes,
            pedagogically_sound: sound,
            comprehensive: 3,
            effective: 4,
            comparison_own: 2,
            needs_edits: YesNo::No,
            timestamp: "2024-05-01T10:00:00Z".parse().unwrap(),
        }
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(rating("t1", "r1", 5).validate().is_ok());
        assert!(rating("t1", "r1", 6).validate().is_err());
        assert!(rating("t1", "r1", 0).validate().is_err());
        assert!(rating("", "r1", 3).validate().is_err());
    }

    #[test]
    fn three_raters_on_one_response() {
        let ratings = vec![rating("a", "r1", 4), rating("b", "r1", 5), rating("c", "r1", 3)];
        let by_response = aggregate::<f64>(&ratings, Grouping::Response, Metric::PedagogicallySound, &BTreeMap::new()).unwrap();
        let s = by_response["r1"];
        assert_eq!((s.n, format!("{:.2}", s.mean), format!("{:.2}", s.sd)), (3, "4.00".into(), "1.00".into()));
    }

    #[test]
    fn overall_is_weighted_combination_of_rater_means() {
        let ratings = vec![rating("a", "r1", 4), rating("a", "r2", 2), rating("b", "r1", 5)];
        let none = BTreeMap::new();
        let overall = aggregate::<f64>(&ratings, Grouping::Overall, Metric::PedagogicallySound, &none).unwrap()["all"];
        let per_rater = aggregate::<f64>(&ratings, Grouping::Rater, Metric::PedagogicallySound, &none).unwrap();
        let weighted: f64 = per_rater.values().map(|s| s.mean * s.n as f64).sum::<f64>() / overall.n as f64;
        assert!((weighted - overall.mean).abs() < 1e-12);
    }

    #[test]
    fn tally_matches_reported_split() {
        let mut tally = CorrectnessTally::default();
        (0..55).for_each(|_| tally.add(Correctness::Yes));
        (0..5).for_each(|_| tally.add(Correctness::Partially));
        assert_eq!(tally.formatted(), ["91.7%".to_string(), "8.3%".into(), "0.0%".into()]);
    }

    #[test]
    fn csv_columns_follow_record_order() {
        let mut out = Vec::new();
        write_csv(&[rating("a", "r1", 4)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "rater_id,response_id,correctness,pedagogically_sound,comprehensive,effective,comparison_own,needs_edits,timestamp"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("a,r1,Yes,4,3,4,2,No,"));
    }

    #[test]
    fn empty_report_says_no_data() {
        let report = stats_report(&[], &[]);
        assert!(report.no_data);
        assert!(report.aggregates.is_empty());
    }
}
