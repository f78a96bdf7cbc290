//! Likert statistics, generic over the scalar type.

use num_traits::{Float, FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ternary {
    Negative,
    Neutral,
    Positive,
}

impl Ternary {
    pub const ALL: [Ternary; 3] = [Ternary::Negative, Ternary::Neutral, Ternary::Positive];

    fn index(self) -> usize {
        self as usize
    }
}

/// 1 and 2 are negative, 3 is neutral, 4 and 5 are positive.
pub fn to_ternary(likert: i64) -> Result<Ternary, AnalyticsError> {
    match likert {
        1 | 2 => Ok(Ternary::Negative),
        3 => Ok(Ternary::Neutral),
        4 | 5 => Ok(Ternary::Positive),
        other => Err(AnalyticsError::OutOfRange(other)),
    }
}

/// Normalized Gini-Simpson index over the three categories: 0 when everyone
/// agrees, 1 when ratings are spread evenly.
///
/// Computed from integer counts, so exact scalar types give exact results.
pub fn disagreement<T: Num + FromPrimitive>(ratings: &[Ternary]) -> Result<T, AnalyticsError> {
    if ratings.len() < 2 {
        return Err(AnalyticsError::TooFewRaters);
    }
    let mut counts = [0usize; 3];
    for rating in ratings {
        counts[rating.index()] += 1;
    }
    let c = Ternary::ALL.len();
    let n = ratings.len();
    let squares: usize = counts.iter().map(|k| k * k).sum();
    // c/(c-1) * (1 - sum(p^2)) = c * (n^2 - sum(k^2)) / ((c - 1) * n^2)
    let numerator = c * (n * n - squares);
    let denominator = (c - 1) * n * n;
    let convert = |v: usize| T::from_usize(v).ok_or(AnalyticsError::InvalidRating("count overflow".into()));
    Ok(convert(numerator)? / convert(denominator)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<F> {
    pub mean: F,
    /// Sample standard deviation; 0 when `n == 1`.
    pub sd: F,
    pub n: usize,
}

impl<F: Float> Summary<F> {
    /// True when `sd` is a placeholder because only one value was seen.
    pub fn sd_undefined(&self) -> bool {
        self.n < 2
    }
}

pub fn summarize<F: Float + FromPrimitive>(values: &[F]) -> Result<Summary<F>, AnalyticsError> {
    if values.is_empty() {
        return Err(AnalyticsError::EmptySelection);
    }
    let n = values.len();
    let count = F::from_usize(n).expect("count fits the scalar type");
    let mean = values.iter().fold(F::zero(), |acc, &v| acc + v) / count;
    let sd = if n < 2 {
        F::zero()
    } else {
        let ss = values.iter().fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean));
        (ss / (count - F::one())).sqrt()
    };
    Ok(Summary { mean, sd, n })
}

/// Integer ratings converted to the scalar type first.
pub fn summarize_likert<F: Float + FromPrimitive>(values: &[u8]) -> Result<Summary<F>, AnalyticsError> {
    let converted: Vec<F> = values.iter().map(|&v| F::from_u8(v).expect("u8 fits")).collect();
    summarize(&converted)
}

/// Share of `part` in `total` as a percentage.
pub fn percent<F: Float + FromPrimitive>(part: usize, total: usize) -> F {
    if total == 0 {
        return F::zero();
    }
    F::from_usize(part * 100).expect("fits") / F::from_usize(total).expect("fits")
}

pub fn format_percent<F: Float + std::fmt::Display>(value: F) -> String {
    format!("{value:.1}%")
}

pub fn format_mean<F: Float + std::fmt::Display>(value: F) -> String {
    format!("{value:.2}")
}
