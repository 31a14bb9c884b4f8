//! Patient-facing measures: Pick-A-Mood, the 10-item PANAS short form and
//! six 5-point recommendation-quality ratings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error("{item} = {value} is outside 1..=5")]
    RangeError { item: String, value: u8 },
    #[error("PANAS item {0} missing")]
    MissingItem(PanasItem),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Positive,
    Neutral,
    Negative,
}

impl Valence {
    pub const ALL: [Valence; 3] = [Valence::Positive, Valence::Neutral, Valence::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Valence::Positive => "positive",
            Valence::Neutral => "neutral",
            Valence::Negative => "negative",
        }
    }
}

/// The nine Pick-A-Mood states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PamMood {
    Excited,
    Cheerful,
    Relaxed,
    Calm,
    Neutral,
    Bored,
    Sad,
    Irritated,
    Tense,
}

impl PamMood {
    pub const ALL: [PamMood; 9] = [
        PamMood::Excited,
        PamMood::Cheerful,
        PamMood::Relaxed,
        PamMood::Calm,
        PamMood::Neutral,
        PamMood::Bored,
        PamMood::Sad,
        PamMood::Irritated,
        PamMood::Tense,
    ];

    pub fn valence(self) -> Valence {
        match self {
            PamMood::Excited | PamMood::Cheerful | PamMood::Relaxed | PamMood::Calm => {
                Valence::Positive
            }
            PamMood::Neutral => Valence::Neutral,
            PamMood::Bored | PamMood::Sad | PamMood::Irritated | PamMood::Tense => {
                Valence::Negative
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PamMood::Excited => "excited",
            PamMood::Cheerful => "cheerful",
            PamMood::Relaxed => "relaxed",
            PamMood::Calm => "calm",
            PamMood::Neutral => "neutral",
            PamMood::Bored => "bored",
            PamMood::Sad => "sad",
            PamMood::Irritated => "irritated",
            PamMood::Tense => "tense",
        }
    }
}

/// A PAM answer. The valence is always derived from the mood, never stored
/// independently, so the two cannot disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "PamWire", into = "PamWire")]
pub struct PamResponse {
    pub mood: PamMood,
}

impl PamResponse {
    pub fn new(mood: PamMood) -> Self {
        Self { mood }
    }

    pub fn valence(&self) -> Valence {
        self.mood.valence()
    }
}

#[derive(Serialize, Deserialize)]
struct PamWire {
    mood: PamMood,
    #[serde(default, skip_deserializing)]
    valence: Option<Valence>,
}

impl From<PamWire> for PamResponse {
    fn from(w: PamWire) -> Self {
        PamResponse { mood: w.mood }
    }
}

impl From<PamResponse> for PamWire {
    fn from(p: PamResponse) -> Self {
        PamWire {
            mood: p.mood,
            valence: Some(p.valence()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanasItem {
    Attentive,
    Determined,
    Enthusiastic,
    Interested,
    Strong,
    Afraid,
    Distressed,
    Nervous,
    Scared,
    Upset,
}

impl PanasItem {
    /// Positive items first, then negative; this is also the export column order.
    pub const ALL: [PanasItem; 10] = [
        PanasItem::Attentive,
        PanasItem::Determined,
        PanasItem::Enthusiastic,
        PanasItem::Interested,
        PanasItem::Strong,
        PanasItem::Afraid,
        PanasItem::Distressed,
        PanasItem::Nervous,
        PanasItem::Scared,
        PanasItem::Upset,
    ];

    pub fn is_positive(self) -> bool {
        matches!(
            self,
            PanasItem::Attentive
                | PanasItem::Determined
                | PanasItem::Enthusiastic
                | PanasItem::Interested
                | PanasItem::Strong
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PanasItem::Attentive => "attentive",
            PanasItem::Determined => "determined",
            PanasItem::Enthusiastic => "enthusiastic",
            PanasItem::Interested => "interested",
            PanasItem::Strong => "strong",
            PanasItem::Afraid => "afraid",
            PanasItem::Distressed => "distressed",
            PanasItem::Nervous => "nervous",
            PanasItem::Scared => "scared",
            PanasItem::Upset => "upset",
        }
    }
}

impl fmt::Display for PanasItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PanasItem {
    type Err = InstrumentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PanasItem::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| InstrumentError::UnknownItem(s.to_string()))
    }
}

fn check_likert(item: &str, value: u8) -> Result<u8, InstrumentError> {
    if (1..=5).contains(&value) {
        Ok(value)
    } else {
        Err(InstrumentError::RangeError {
            item: item.to_string(),
            value,
        })
    }
}

/// The short-form item whose wording is not fixed; kept as given and left
/// out of the positive/negative aggregates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeutralItem {
    pub label: String,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PanasWire", into = "PanasWire")]
pub struct PanasResponse {
    items: BTreeMap<PanasItem, u8>,
    neutral: Option<NeutralItem>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PanasWire {
    items: BTreeMap<PanasItem, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neutral: Option<NeutralItem>,
}

impl TryFrom<PanasWire> for PanasResponse {
    type Error = InstrumentError;

    fn try_from(w: PanasWire) -> Result<Self, Self::Error> {
        let mut r = PanasResponse::new(w.items)?;
        if let Some(n) = w.neutral {
            r = r.with_neutral(n.label, n.value)?;
        }
        Ok(r)
    }
}

impl From<PanasResponse> for PanasWire {
    fn from(r: PanasResponse) -> Self {
        PanasWire {
            items: r.items,
            neutral: r.neutral,
        }
    }
}

impl PanasResponse {
    /// All ten items must be present with values in 1..=5.
    pub fn new(items: impl IntoIterator<Item = (PanasItem, u8)>) -> Result<Self, InstrumentError> {
        let mut map = BTreeMap::new();
        for (item, value) in items {
            map.insert(item, check_likert(item.as_str(), value)?);
        }
        if let Some(missing) = PanasItem::ALL.into_iter().find(|i| !map.contains_key(i)) {
            return Err(InstrumentError::MissingItem(missing));
        }
        Ok(Self {
            items: map,
            neutral: None,
        })
    }

    /// Every item set to `value`.
    pub fn uniform(value: u8) -> Result<Self, InstrumentError> {
        Self::new(PanasItem::ALL.map(|i| (i, value)))
    }

    pub fn with_neutral(
        mut self,
        label: impl Into<String>,
        value: u8,
    ) -> Result<Self, InstrumentError> {
        let label = label.into();
        check_likert(&label, value)?;
        self.neutral = Some(NeutralItem { label, value });
        Ok(self)
    }

    pub fn get(&self, item: PanasItem) -> u8 {
        self.items[&item]
    }

    pub fn neutral(&self) -> Option<&NeutralItem> {
        self.neutral.as_ref()
    }

    pub fn positive_sum(&self) -> u32 {
        self.sum_where(true)
    }

    pub fn negative_sum(&self) -> u32 {
        self.sum_where(false)
    }

    fn sum_where(&self, positive: bool) -> u32 {
        self.items
            .iter()
            .filter(|(i, _)| i.is_positive() == positive)
            .map(|(_, &v)| u32::from(v))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityDimension {
    Accuracy,
    Diversity,
    Novelty,
    Serendipity,
    Immersion,
    Engagement,
}

impl QualityDimension {
    pub const ALL: [QualityDimension; 6] = [
        QualityDimension::Accuracy,
        QualityDimension::Diversity,
        QualityDimension::Novelty,
        QualityDimension::Serendipity,
        QualityDimension::Immersion,
        QualityDimension::Engagement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityDimension::Accuracy => "accuracy",
            QualityDimension::Diversity => "diversity",
            QualityDimension::Novelty => "novelty",
            QualityDimension::Serendipity => "serendipity",
            QualityDimension::Immersion => "immersion",
            QualityDimension::Engagement => "engagement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityRatings {
    pub accuracy: u8,
    pub diversity: u8,
    pub novelty: u8,
    pub serendipity: u8,
    pub immersion: u8,
    pub engagement: u8,
}

impl QualityRatings {
    pub fn uniform(value: u8) -> Self {
        Self {
            accuracy: value,
            diversity: value,
            novelty: value,
            serendipity: value,
            immersion: value,
            engagement: value,
        }
    }

    pub fn get(&self, dim: QualityDimension) -> u8 {
        match dim {
            QualityDimension::Accuracy => self.accuracy,
            QualityDimension::Diversity => self.diversity,
            QualityDimension::Novelty => self.novelty,
            QualityDimension::Serendipity => self.serendipity,
            QualityDimension::Immersion => self.immersion,
            QualityDimension::Engagement => self.engagement,
        }
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        for dim in QualityDimension::ALL {
            check_likert(dim.as_str(), self.get(dim))?;
        }
        Ok(())
    }
}

/// Instruments captured at one point in time (before or after the session).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstrumentBundle {
    #[serde(default)]
    pub pam: Option<PamResponse>,
    #[serde(default)]
    pub panas: Option<PanasResponse>,
    #[serde(default)]
    pub captured_at: Option<DateTime<Utc>>,
}

impl InstrumentBundle {
    pub fn new(pam: Option<PamResponse>, panas: Option<PanasResponse>) -> Self {
        Self {
            pam,
            panas,
            captured_at: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pam.is_none() && self.panas.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valence_partition_is_total() {
        let mut counts = BTreeMap::new();
        for mood in PamMood::ALL {
            *counts.entry(mood.valence()).or_insert(0) += 1;
        }
        assert_eq!(counts[&Valence::Positive], 4);
        assert_eq!(counts[&Valence::Neutral], 1);
        assert_eq!(counts[&Valence::Negative], 4);
    }

    #[test]
    fn pam_serializes_with_derived_valence() {
        let json = serde_json::to_string(&PamResponse::new(PamMood::Tense)).unwrap();
        assert_eq!(json, r#"{"mood":"tense","valence":"negative"}"#);
        // a stored valence can never override the mood
        let back: PamResponse =
            serde_json::from_str(r#"{"mood":"calm","valence":"negative"}"#).unwrap();
        assert_eq!(back.valence(), Valence::Positive);
    }

    #[test]
    fn panas_validation() {
        assert!(PanasResponse::uniform(3).is_ok());
        assert_eq!(
            PanasResponse::uniform(6).unwrap_err(),
            InstrumentError::RangeError {
                item: "attentive".into(),
                value: 6
            }
        );
        let nine = PanasItem::ALL[..9].iter().map(|&i| (i, 2));
        assert_eq!(
            PanasResponse::new(nine).unwrap_err(),
            InstrumentError::MissingItem(PanasItem::Upset)
        );
        let bad: Result<PanasResponse, _> = serde_json::from_str(r#"{"items":{"afraid":1}}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn panas_sums_ignore_neutral() {
        let r =
            PanasResponse::new(PanasItem::ALL.map(|i| (i, if i.is_positive() { 4 } else { 2 })))
                .unwrap()
                .with_neutral("alert", 5)
                .unwrap();
        assert_eq!(r.positive_sum(), 20);
        assert_eq!(r.negative_sum(), 10);
        let json = serde_json::to_string(&r).unwrap();
        let back: PanasResponse = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn ratings_range() {
        assert!(QualityRatings::uniform(3).validate().is_ok());
        assert!(matches!(
            QualityRatings::uniform(6).validate(),
            Err(InstrumentError::RangeError { value: 6, .. })
        ));
        assert!(QualityRatings::uniform(0).validate().is_err());
    }
}
