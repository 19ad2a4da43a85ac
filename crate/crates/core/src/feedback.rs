//! Multi-level ratings and acceptance-survey aggregation.
//!
//! All means are exact rational means rounded half-up to two decimals; the
//! rounding is done in integer arithmetic so no binary floating-point error
//! can push a value across a rounding boundary.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeedbackError {
    #[error("rating {0} outside {MIN_RATING}..={MAX_RATING}")]
    InvalidRating(i64),
    #[error("{0} must be non-empty")]
    EmptyField(&'static str),
}

pub fn check_rating(rating: i64) -> Result<u8, FeedbackError> {
    if (i64::from(MIN_RATING)..=i64::from(MAX_RATING)).contains(&rating) {
        Ok(rating as u8)
    } else {
        Err(FeedbackError::InvalidRating(rating))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackLevel {
    Chat,
    Teaching,
    Quiz,
}

impl FeedbackLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Chat => "chat",
            Self::Teaching => "teaching",
            Self::Quiz => "quiz",
        }
    }
}

impl std::str::FromStr for FeedbackLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chat" => Ok(Self::Chat),
            "teaching" => Ok(Self::Teaching),
            "quiz" => Ok(Self::Quiz),
            other => Err(format!("unknown feedback level `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub at: DateTime<Utc>,
    pub student_id: String,
    pub level: FeedbackLevel,
    pub item_id: String,
    pub rating: u8,
    pub comment: Option<String>,
}

impl FeedbackRecord {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        check_rating(i64::from(self.rating))?;
        if self.student_id.is_empty() {
            return Err(FeedbackError::EmptyField("student_id"));
        }
        if self.item_id.is_empty() {
            return Err(FeedbackError::EmptyField("item_id"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceCategory {
    PerformanceExpectancy,
    EffortExpectancy,
    SocialInfluence,
    FacilitatingConditions,
}

impl AcceptanceCategory {
    pub const ALL: [AcceptanceCategory; 4] =
        [Self::PerformanceExpectancy, Self::EffortExpectancy, Self::SocialInfluence, Self::FacilitatingConditions];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PerformanceExpectancy => "performance_expectancy",
            Self::EffortExpectancy => "effort_expectancy",
            Self::SocialInfluence => "social_influence",
            Self::FacilitatingConditions => "facilitating_conditions",
        }
    }
}

impl std::str::FromStr for AcceptanceCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown acceptance category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceResponse {
    pub respondent_id: String,
    pub category: AcceptanceCategory,
    pub rating: u8,
}

impl AcceptanceResponse {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        check_rating(i64::from(self.rating))?;
        if self.respondent_id.is_empty() {
            return Err(FeedbackError::EmptyField("respondent_id"));
        }
        Ok(())
    }
}

/// Validates and durably appends one rating; returns its 1-based ordinal in the log.
pub fn record_feedback(
    store: &crate::persistence::DataDir,
    rec: &FeedbackRecord,
) -> Result<u64, crate::persistence::PersistenceError> {
    store.append_feedback(rec)
}

/// `sum / count` rounded half-up to hundredths, as an integer number of hundredths.
pub fn half_up_hundredths(sum: u64, count: u64) -> u64 {
    assert!(count > 0, "mean of an empty set");
    (200 * sum + count) / (2 * count)
}

pub fn rounded_mean(sum: u64, count: u64) -> f64 {
    half_up_hundredths(sum, count) as f64 / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub count: u64,
    pub sum: u64,
    /// Rounded half-up to two decimals.
    pub mean: f64,
}

impl LevelSummary {
    fn from_parts(count: u64, sum: u64) -> Self {
        Self { count, sum, mean: rounded_mean(sum, count) }
    }

    /// Unrounded mean.
    pub fn exact_mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }
}

pub fn summarize_by_level(records: &[FeedbackRecord]) -> BTreeMap<FeedbackLevel, LevelSummary> {
    let mut acc: BTreeMap<FeedbackLevel, (u64, u64)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.level).or_default();
        e.0 += 1;
        e.1 += u64::from(r.rating);
    }
    acc.into_iter().map(|(lvl, (c, s))| (lvl, LevelSummary::from_parts(c, s))).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryAverages {
    pub means: BTreeMap<AcceptanceCategory, f64>,
    pub counts: BTreeMap<AcceptanceCategory, u64>,
}

pub fn aggregate_acceptance(responses: &[AcceptanceResponse]) -> CategoryAverages {
    let mut acc: BTreeMap<AcceptanceCategory, (u64, u64)> = BTreeMap::new();
    for r in responses {
        let e = acc.entry(r.category).or_default();
        e.0 += 1;
        e.1 += u64::from(r.rating);
    }
    let mut out = CategoryAverages::default();
    for (cat, (count, sum)) in acc {
        out.means.insert(cat, rounded_mean(sum, count));
        out.counts.insert(cat, count);
    }
    out
}
