//! Tidy one-row-per-session export for external statistics tooling.
//!
//! Column order is fixed by [`EXPORT_COLUMNS`]:
//!
//! | columns | content |
//! |---|---|
//! | `session_id`, `arm`, `seed_id`, `complete` | identity and completeness flag |
//! | `pre_mood`, `pre_valence`, `post_mood`, `post_valence` | Pick-A-Mood answers |
//! | `pre_<item>` × 10, `post_<item>` × 10 | PANAS items, positive items first |
//! | `accuracy` … `engagement` | the six quality ratings |
//! | `reflection_sentiments` | `painting:label:confidence` entries joined by `;`, in painting order |
//!
//! Missing answers are empty cells. Confidence is printed with four decimals.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::sentiment::{classify_sentiment, SentimentClassifier};
use super::AnalyticsError;
use crate::session::{GuidedSession, InstrumentBundle, PanasItem, QualityDimension};

pub const EXPORT_COLUMNS: [&str; 35] = [
    "session_id",
    "arm",
    "seed_id",
    "complete",
    "pre_mood",
    "pre_valence",
    "post_mood",
    "post_valence",
    "pre_attentive",
    "pre_determined",
    "pre_enthusiastic",
    "pre_interested",
    "pre_strong",
    "pre_afraid",
    "pre_distressed",
    "pre_nervous",
    "pre_scared",
    "pre_upset",
    "post_attentive",
    "post_determined",
    "post_enthusiastic",
    "post_interested",
    "post_strong",
    "post_afraid",
    "post_distressed",
    "post_nervous",
    "post_scared",
    "post_upset",
    "accuracy",
    "diversity",
    "novelty",
    "serendipity",
    "immersion",
    "engagement",
    "reflection_sentiments",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSentiment {
    pub painting_id: String,
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session_id: String,
    pub arm: String,
    pub seed_id: String,
    pub complete: bool,
    pub pre_mood: Option<String>,
    pub pre_valence: Option<String>,
    pub post_mood: Option<String>,
    pub post_valence: Option<String>,
    /// In [`PanasItem::ALL`] order.
    pub pre_panas: Vec<Option<u8>>,
    pub post_panas: Vec<Option<u8>>,
    /// In [`QualityDimension::ALL`] order.
    pub ratings: Vec<Option<u8>>,
    pub reflection_sentiments: Vec<ReflectionSentiment>,
}

fn panas_cells(bundle: &InstrumentBundle) -> Vec<Option<u8>> {
    PanasItem::ALL
        .iter()
        .map(|&item| bundle.panas.as_ref().map(|p| p.get(item)))
        .collect()
}

impl SessionRow {
    pub fn build(
        session: &GuidedSession,
        classifier: Option<&dyn SentimentClassifier>,
    ) -> Result<Self, AnalyticsError> {
        let mut reflection_sentiments = Vec::new();
        if let Some(classifier) = classifier {
            for p in &session.paintings {
                if let Some(text) = session.reflections.get(p) {
                    let label = classify_sentiment(text, classifier)?;
                    reflection_sentiments.push(ReflectionSentiment {
                        painting_id: p.clone(),
                        label: label.label.as_str().to_string(),
                        confidence: label.confidence,
                    });
                }
            }
        }
        let mood = |b: &InstrumentBundle| b.pam.as_ref().map(|p| p.mood.as_str().to_string());
        let valence =
            |b: &InstrumentBundle| b.pam.as_ref().map(|p| p.valence().as_str().to_string());
        Ok(Self {
            session_id: session.session_id.clone(),
            arm: session.arm.as_str().to_string(),
            seed_id: session.seed_id.clone(),
            complete: session.is_complete(),
            pre_mood: mood(&session.pre),
            pre_valence: valence(&session.pre),
            post_mood: mood(&session.post),
            post_valence: valence(&session.post),
            pre_panas: panas_cells(&session.pre),
            post_panas: panas_cells(&session.post),
            ratings: QualityDimension::ALL
                .iter()
                .map(|&d| session.ratings.map(|r| r.get(d)))
                .collect(),
            reflection_sentiments,
        })
    }

    /// Cells in [`EXPORT_COLUMNS`] order.
    pub fn to_record(&self) -> Vec<String> {
        let opt = |v: &Option<String>| v.clone().unwrap_or_default();
        let num = |v: &Option<u8>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = vec![
            self.session_id.clone(),
            self.arm.clone(),
            self.seed_id.clone(),
            self.complete.to_string(),
            opt(&self.pre_mood),
            opt(&self.pre_valence),
            opt(&self.post_mood),
            opt(&self.post_valence),
        ];
        out.extend(self.pre_panas.iter().map(num));
        out.extend(self.post_panas.iter().map(num));
        out.extend(self.ratings.iter().map(num));
        out.push(
            self.reflection_sentiments
                .iter()
                .map(|r| format!("{}:{}:{:.4}", r.painting_id, r.label, r.confidence))
                .collect::<Vec<_>>()
                .join(";"),
        );
        out
    }
}

/// Rows sorted by session id so the output does not depend on input order.
pub fn export_rows(
    sessions: &[GuidedSession],
    classifier: Option<&dyn SentimentClassifier>,
) -> Result<Vec<SessionRow>, AnalyticsError> {
    let mut rows = sessions
        .iter()
        .map(|s| SessionRow::build(s, classifier))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Ok(rows)
}

pub fn export_csv<W: Write>(rows: &[SessionRow], out: W) -> Result<(), AnalyticsError> {
    let err = |e: csv::Error| AnalyticsError::Export(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EXPORT_COLUMNS).map_err(err)?;
    for row in rows {
        w.write_record(row.to_record()).map_err(err)?;
    }
    w.flush().map_err(|e| AnalyticsError::Export(e.to_string()))
}
