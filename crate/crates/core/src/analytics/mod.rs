//! Descriptive summaries over guided sessions.
//!
//! Every summary comes in a pooled form and a per-arm form. Arms with no
//! sessions are left out of the per-arm maps rather than reported as zeros.

pub mod export;
pub mod sentiment;
pub mod stats;
pub mod themes;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::Arm;
use crate::session::{GuidedSession, PanasItem, PanasResponse, QualityDimension, Valence};
pub use export::{export_csv, export_rows, SessionRow, EXPORT_COLUMNS};
pub use sentiment::{
    classify_sentiment, CommandClassifier, LexiconClassifier, Polarity, SentimentClassifier,
    SentimentLabel,
};
pub use stats::{median, Descriptive};
pub use themes::{ThemeCode, ThemeCodebook, ThemeDef, ThemeStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("session {0:?} lacks the instruments this summary needs")]
    IncompleteSession(String),
    #[error("text must not be empty")]
    EmptyText,
    #[error("sentiment classifier unavailable: {0}")]
    ClassifierUnavailable(String),
    #[error("theme {0:?} is not in the codebook")]
    UnknownTheme(String),
    #[error("bad lexicon: {0}")]
    Lexicon(String),
    #[error("export failed: {0}")]
    Export(String),
}

impl AnalyticsError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalyticsError::IncompleteSession(_) => "IncompleteSession",
            AnalyticsError::EmptyText => "EmptyText",
            AnalyticsError::ClassifierUnavailable(_) => "ClassifierUnavailable",
            AnalyticsError::UnknownTheme(_) => "UnknownTheme",
            AnalyticsError::Lexicon(_) => "Lexicon",
            AnalyticsError::Export(_) => "Export",
        }
    }
}

/// Pooled and per-arm views of one summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouped<T> {
    pub pooled: Option<T>,
    pub per_arm: BTreeMap<Arm, T>,
}

fn grouped<'a, T, E>(
    sessions: &'a [GuidedSession],
    summarize: impl Fn(&[&'a GuidedSession]) -> Result<T, E>,
) -> Result<Grouped<T>, E> {
    if sessions.is_empty() {
        return Ok(Grouped {
            pooled: None,
            per_arm: BTreeMap::new(),
        });
    }
    let all: Vec<&GuidedSession> = sessions.iter().collect();
    let pooled = summarize(&all)?;
    let mut by_arm: BTreeMap<Arm, Vec<&GuidedSession>> = BTreeMap::new();
    for s in sessions {
        by_arm.entry(s.arm).or_default().push(s);
    }
    let per_arm = by_arm
        .into_iter()
        .map(|(arm, group)| summarize(&group).map(|t| (arm, t)))
        .collect::<Result<_, E>>()?;
    Ok(Grouped {
        pooled: Some(pooled),
        per_arm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoodTransition {
    pub pre_valence: Valence,
    pub post_valence: Valence,
    pub improved: bool,
}

impl MoodTransition {
    pub fn new(pre_valence: Valence, post_valence: Valence) -> Self {
        Self {
            pre_valence,
            post_valence,
            improved: is_improvement(pre_valence, post_valence),
        }
    }

    pub fn of(session: &GuidedSession) -> Result<Self, AnalyticsError> {
        match (&session.pre.pam, &session.post.pam) {
            (Some(pre), Some(post)) => Ok(Self::new(pre.valence(), post.valence())),
            _ => Err(AnalyticsError::IncompleteSession(
                session.session_id.clone(),
            )),
        }
    }
}

/// Negative or neutral to positive, or negative to neutral.
pub fn is_improvement(pre: Valence, post: Valence) -> bool {
    use Valence::*;
    matches!(
        (pre, post),
        (Negative | Neutral, Positive) | (Negative, Neutral)
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValenceCounts {
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
}

impl ValenceCounts {
    fn bump(&mut self, v: Valence) {
        match v {
            Valence::Positive => self.positive += 1,
            Valence::Neutral => self.neutral += 1,
            Valence::Negative => self.negative += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.neutral + self.negative
    }

    pub fn shares(&self) -> ValenceShares {
        let n = self.total() as f64;
        ValenceShares {
            positive: self.positive as f64 / n,
            neutral: self.neutral as f64 / n,
            negative: self.negative as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValenceShares {
    pub positive: f64,
    pub neutral: f64,
    pub negative: f64,
}

impl ValenceShares {
    pub fn get(&self, v: Valence) -> f64 {
        match v {
            Valence::Positive => self.positive,
            Valence::Neutral => self.neutral,
            Valence::Negative => self.negative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionCell {
    pub pre_valence: Valence,
    pub post_valence: Valence,
    pub count: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodBreakdown {
    pub n: usize,
    pub pre_counts: ValenceCounts,
    pub post_counts: ValenceCounts,
    pub pre: ValenceShares,
    pub post: ValenceShares,
    /// All nine (pre, post) pairs, including empty ones.
    pub transitions: Vec<TransitionCell>,
    pub improved: f64,
}

impl MoodBreakdown {
    pub fn from_transitions(ts: &[MoodTransition]) -> Option<Self> {
        if ts.is_empty() {
            return None;
        }
        let n = ts.len();
        let mut pre_counts = ValenceCounts::default();
        let mut post_counts = ValenceCounts::default();
        let mut cells: BTreeMap<(Valence, Valence), usize> = BTreeMap::new();
        for t in ts {
            pre_counts.bump(t.pre_valence);
            post_counts.bump(t.post_valence);
            *cells.entry((t.pre_valence, t.post_valence)).or_default() += 1;
        }
        let transitions = Valence::ALL
            .iter()
            .flat_map(|&pre| Valence::ALL.iter().map(move |&post| (pre, post)))
            .map(|(pre, post)| {
                let count = cells.get(&(pre, post)).copied().unwrap_or(0);
                TransitionCell {
                    pre_valence: pre,
                    post_valence: post,
                    count,
                    proportion: count as f64 / n as f64,
                }
            })
            .collect();
        let improved = ts.iter().filter(|t| t.improved).count() as f64 / n as f64;
        Some(Self {
            n,
            pre: pre_counts.shares(),
            post: post_counts.shares(),
            pre_counts,
            post_counts,
            transitions,
            improved,
        })
    }
}

pub type MoodSummary = Grouped<MoodBreakdown>;

pub fn mood_summary(sessions: &[GuidedSession]) -> Result<MoodSummary, AnalyticsError> {
    grouped(sessions, |group| {
        let ts = group
            .iter()
            .map(|s| MoodTransition::of(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MoodBreakdown::from_transitions(&ts).expect("groups are non-empty"))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanasDelta {
    pub per_item: BTreeMap<PanasItem, i8>,
    pub positive_sum_delta: i32,
    pub negative_sum_delta: i32,
}

impl PanasDelta {
    /// `post - pre` per item.
    pub fn between(pre: &PanasResponse, post: &PanasResponse) -> Self {
        let per_item: BTreeMap<PanasItem, i8> = PanasItem::ALL
            .iter()
            .map(|&item| (item, post.get(item) as i8 - pre.get(item) as i8))
            .collect();
        let sum = |positive: bool| {
            per_item
                .iter()
                .filter(|(item, _)| item.is_positive() == positive)
                .map(|(_, &d)| d as i32)
                .sum()
        };
        Self {
            positive_sum_delta: sum(true),
            negative_sum_delta: sum(false),
            per_item,
        }
    }

    pub fn of(session: &GuidedSession) -> Result<Self, AnalyticsError> {
        match (&session.pre.panas, &session.post.panas) {
            (Some(pre), Some(post)) => Ok(Self::between(pre, post)),
            _ => Err(AnalyticsError::IncompleteSession(
                session.session_id.clone(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemDelta {
    pub median: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanasAggregate {
    pub n: usize,
    pub items: BTreeMap<PanasItem, ItemDelta>,
    pub positive_sum_delta: Descriptive,
    pub negative_sum_delta: Descriptive,
}

impl PanasAggregate {
    pub fn from_deltas(deltas: &[PanasDelta]) -> Option<Self> {
        if deltas.is_empty() {
            return None;
        }
        let items = PanasItem::ALL
            .iter()
            .map(|&item| {
                let d = column(deltas, |x| x.per_item[&item] as f64);
                (
                    item,
                    ItemDelta {
                        median: d.median,
                        mean: d.mean,
                    },
                )
            })
            .collect();
        Some(Self {
            n: deltas.len(),
            items,
            positive_sum_delta: column(deltas, |x| x.positive_sum_delta as f64),
            negative_sum_delta: column(deltas, |x| x.negative_sum_delta as f64),
        })
    }
}

fn column<T>(rows: &[T], f: impl Fn(&T) -> f64) -> Descriptive {
    let values: Vec<f64> = rows.iter().map(f).collect();
    Descriptive::of(&values).expect("non-empty")
}

pub type PanasSummary = Grouped<PanasAggregate>;

pub fn panas_summary(sessions: &[GuidedSession]) -> Result<PanasSummary, AnalyticsError> {
    grouped(sessions, |group| {
        let deltas = group
            .iter()
            .map(|s| PanasDelta::of(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PanasAggregate::from_deltas(&deltas).expect("groups are non-empty"))
    })
}

pub type RatingSummary = Grouped<BTreeMap<QualityDimension, Descriptive>>;

pub fn rating_summary(sessions: &[GuidedSession]) -> Result<RatingSummary, AnalyticsError> {
    grouped(sessions, |group| {
        let ratings = group
            .iter()
            .map(|s| {
                s.ratings
                    .ok_or_else(|| AnalyticsError::IncompleteSession(s.session_id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(QualityDimension::ALL
            .iter()
            .map(|&dim| (dim, column(&ratings, |r| r.get(dim) as f64)))
            .collect())
    })
}
