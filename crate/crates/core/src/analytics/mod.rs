//! Rating capture, aggregation, disagreement, corpus handling and sampling.

pub mod corpus;
pub mod mutation;
pub mod ratings;
pub mod stats;

pub use corpus::{assign_groups, group_entries, read_jsonl, sample_groups, write_jsonl, CorpusEntry, Provenance};
pub use mutation::{generate_corpus, mutate, CorpusMix, Pattern};
pub use ratings::{
    aggregate, stats_report, write_csv, Correctness, CorrectnessTally, Grouping, Metric, RatingRecord, StatsReport, YesNo,
};
pub use stats::{disagreement, summarize, summarize_likert, to_ternary, Summary, Ternary};
