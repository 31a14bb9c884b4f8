//! Guided sessions built from a finalized curation.
//!
//! A guided session walks a patient through the curated paintings for one
//! seed. Affect is captured before and after, then the patient writes a
//! reflection per painting and rates the selection.

pub mod instruments;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{transition, Arm, CurationError, CurationSession, Operation};
pub use instruments::{
    InstrumentBundle, InstrumentError, NeutralItem, PamMood, PamResponse, PanasItem, PanasResponse,
    QualityDimension, QualityRatings, Valence,
};

/// Narrative prompts shown with every painting unless configured otherwise.
pub const DEFAULT_PROMPTS: [&str; 2] = [
    "Imagine yourself entering the painting and exploring it. How did you feel while spending time in this painting?",
    "Describe your experience in three to four sentences.",
];

pub fn default_prompts() -> Vec<String> {
    DEFAULT_PROMPTS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capture {
    Pre,
    Post,
    Ratings,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error("{0:?} is not a seed of the curation")]
    UnknownSeed(String),
    #[error("{0:?} already captured")]
    DuplicateCapture(Capture),
    #[error("post-session instruments recorded before pre-session ones")]
    OutOfOrder,
    #[error("painting {0:?} is not part of this session")]
    UnknownPainting(String),
    #[error("text must not be empty")]
    EmptyText,
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Curation(e) => e.code(),
            SessionError::UnknownSeed(_) => "UnknownSeed",
            SessionError::DuplicateCapture(_) => "DuplicateCapture",
            SessionError::OutOfOrder => "OutOfOrder",
            SessionError::UnknownPainting(_) => "UnknownPainting",
            SessionError::EmptyText => "EmptyText",
            SessionError::Instrument(InstrumentError::RangeError { .. }) => "RangeError",
            SessionError::Instrument(InstrumentError::MissingItem(_)) => "MissingItem",
            SessionError::Instrument(InstrumentError::UnknownItem(_)) => "UnknownItem",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedSession {
    pub session_id: String,
    pub curation_ref: String,
    pub arm: Arm,
    pub seed_id: String,
    pub paintings: Vec<String>,
    pub prompts: Vec<String>,
    pub pre: InstrumentBundle,
    pub post: InstrumentBundle,
    pub ratings: Option<QualityRatings>,
    pub reflections: BTreeMap<String, String>,
    pub created_at: DateTime<Utc>,
}

/// Builds the guided session for `seed_id` and marks the curation delivered.
pub fn build_session(
    curation: &mut CurationSession,
    seed_id: &str,
    session_id: impl Into<String>,
    at: DateTime<Utc>,
) -> Result<GuidedSession, SessionError> {
    build_session_with_prompts(curation, seed_id, session_id, default_prompts(), at)
}

pub fn build_session_with_prompts(
    curation: &mut CurationSession,
    seed_id: &str,
    session_id: impl Into<String>,
    prompts: Vec<String>,
    at: DateTime<Utc>,
) -> Result<GuidedSession, SessionError> {
    if transition(curation.arm(), curation.state(), Operation::Deliver).is_none() {
        return Err(CurationError::IllegalTransition {
            state: curation.state(),
            operation: Operation::Deliver,
        }
        .into());
    }
    let paintings = curation
        .curated()
        .get(seed_id)
        .cloned()
        .ok_or_else(|| SessionError::UnknownSeed(seed_id.to_string()))?;
    let session_id = session_id.into();
    curation.mark_delivered(session_id.clone(), at)?;
    Ok(GuidedSession {
        session_id,
        curation_ref: curation.session_id().to_string(),
        arm: curation.arm(),
        seed_id: seed_id.to_string(),
        paintings,
        prompts,
        pre: InstrumentBundle::default(),
        post: InstrumentBundle::default(),
        ratings: None,
        reflections: BTreeMap::new(),
        created_at: at,
    })
}

fn stamp(mut bundle: InstrumentBundle, at: DateTime<Utc>) -> InstrumentBundle {
    bundle.captured_at = Some(at);
    bundle
}

impl GuidedSession {
    pub fn has_pre(&self) -> bool {
        self.pre.captured_at.is_some()
    }

    pub fn has_post(&self) -> bool {
        self.post.captured_at.is_some()
    }

    pub fn record_pre(
        &mut self,
        bundle: InstrumentBundle,
        at: DateTime<Utc>,
    ) -> Result<(), SessionError> {
        if self.has_pre() {
            return Err(SessionError::DuplicateCapture(Capture::Pre));
        }
        self.pre = stamp(bundle, at);
        Ok(())
    }

    pub fn record_post(
        &mut self,
        bundle: InstrumentBundle,
        at: DateTime<Utc>,
    ) -> Result<(), SessionError> {
        if !self.has_pre() {
            return Err(SessionError::OutOfOrder);
        }
        if self.has_post() {
            return Err(SessionError::DuplicateCapture(Capture::Post));
        }
        self.post = stamp(bundle, at);
        Ok(())
    }

    /// Stores the text exactly as given. A later reflection for the same
    /// painting replaces the earlier one.
    pub fn record_reflection(
        &mut self,
        painting_id: &str,
        text: impl Into<String>,
    ) -> Result<(), SessionError> {
        if !self.paintings.iter().any(|p| p == painting_id) {
            return Err(SessionError::UnknownPainting(painting_id.to_string()));
        }
        let text = text.into();
        if text.trim().is_empty() {
            return Err(SessionError::EmptyText);
        }
        self.reflections.insert(painting_id.to_string(), text);
        Ok(())
    }

    pub fn record_ratings(&mut self, ratings: QualityRatings) -> Result<(), SessionError> {
        if self.ratings.is_some() {
            return Err(SessionError::DuplicateCapture(Capture::Ratings));
        }
        ratings.validate()?;
        self.ratings = Some(ratings);
        Ok(())
    }

    /// Pre and post captured, ratings given and a reflection for every painting.
    pub fn is_complete(&self) -> bool {
        self.has_pre()
            && self.has_post()
            && self.ratings.is_some()
            && self
                .paintings
                .iter()
                .all(|p| self.reflections.contains_key(p))
    }

    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::curation::{ActionKind, CurationState, ExpertAction, NewSession};
    use crate::testutil::{catalog_of, mins, random_vectors, space_of, t0};

    fn curated() -> CurationSession {
        let ids: Vec<String> = (0..10).map(|i| format!("p-{i:03}")).collect();
        let catalog = catalog_of(&ids);
        let space = space_of("visual", random_vectors(10, 8, 3));
        let mut c = CurationSession::start(
            NewSession::new("cs", "t", "p", Arm::HitlVisual, vec!["p-000".into()]),
            &catalog,
            t0(),
        )
        .unwrap();
        c.attach_recommendations(&space, 200, mins(1)).unwrap();
        c.record_action(
            ExpertAction::new(mins(2), ActionKind::View, "p-000").subject("p-000"),
            None,
        )
        .unwrap();
        let picks = c
            .candidates("p-000")
            .into_iter()
            .take(3)
            .map(str::to_owned)
            .collect();
        c.finalize_curation(BTreeMap::from([("p-000".to_string(), picks)]), mins(3))
            .unwrap();
        c
    }

    fn session() -> GuidedSession {
        build_session(&mut curated(), "p-000", "gs-1", mins(4)).unwrap()
    }

    fn bundle(mood: PamMood) -> InstrumentBundle {
        InstrumentBundle::new(
            Some(PamResponse::new(mood)),
            Some(PanasResponse::uniform(3).unwrap()),
        )
    }

    #[test]
    fn build_examples() {
        let mut c = curated();
        let s = build_session(&mut c, "p-000", "gs-1", mins(4)).unwrap();
        assert_eq!(s.paintings.len(), 3);
        assert_eq!(s.paintings, c.curated()["p-000"]);
        assert!(
            s.prompts[0].starts_with("Imagine yourself entering the painting and exploring it.")
        );
        assert_eq!(c.state(), CurationState::Delivered);
        // a second patient can receive the same curated set
        build_session(&mut c, "p-000", "gs-2", mins(5)).unwrap();

        let mut c = curated();
        assert!(matches!(
            build_session(&mut c, "p-009", "gs", mins(4)),
            Err(SessionError::UnknownSeed(_))
        ));
        assert_eq!(c.state(), CurationState::Curated);
    }

    #[test]
    fn build_requires_curated_state() {
        let ids: Vec<String> = (0..4).map(|i| format!("p-{i:03}")).collect();
        let mut c = CurationSession::start(
            NewSession::new("cs", "t", "p", Arm::ExpertOnly, vec!["p-000".into()]),
            &catalog_of(&ids),
            t0(),
        )
        .unwrap();
        c.record_action(
            ExpertAction::new(mins(1), ActionKind::View, "p-000").subject("p-001"),
            None,
        )
        .unwrap();
        let err = build_session(&mut c, "p-000", "gs", mins(2)).unwrap_err();
        assert_eq!(err.code(), "IllegalTransition");
    }

    #[test]
    fn capture_order() {
        let mut s = session();
        assert_eq!(
            s.record_post(bundle(PamMood::Calm), mins(5)).unwrap_err(),
            SessionError::OutOfOrder
        );
        s.record_pre(bundle(PamMood::Tense), mins(5)).unwrap();
        assert_eq!(
            s.record_pre(bundle(PamMood::Tense), mins(6)).unwrap_err(),
            SessionError::DuplicateCapture(Capture::Pre)
        );
        s.record_post(bundle(PamMood::Calm), mins(7)).unwrap();
        assert_eq!(s.pre.captured_at, Some(mins(5)));
        assert_eq!(s.post.pam.unwrap().valence(), Valence::Positive);
        assert_eq!(
            s.record_post(bundle(PamMood::Calm), mins(8)).unwrap_err(),
            SessionError::DuplicateCapture(Capture::Post)
        );
    }

    #[test]
    fn reflections() {
        let mut s = session();
        let p = s.paintings[0].clone();
        let text = "I walked along the river. The light was soft.\nI felt calm and safe.";
        s.record_reflection(&p, text).unwrap();
        assert_eq!(s.reflections[&p], text);
        assert_eq!(
            s.record_reflection("p-999", "x").unwrap_err(),
            SessionError::UnknownPainting("p-999".into())
        );
        assert_eq!(
            s.record_reflection(&p, "").unwrap_err(),
            SessionError::EmptyText
        );
        assert_eq!(
            s.record_reflection(&p, "  \n").unwrap_err(),
            SessionError::EmptyText
        );
    }

    #[test]
    fn ratings() {
        let mut s = session();
        assert_eq!(
            s.record_ratings(QualityRatings::uniform(6))
                .unwrap_err()
                .code(),
            "RangeError"
        );
        s.record_ratings(QualityRatings::uniform(3)).unwrap();
        assert_eq!(
            s.record_ratings(QualityRatings::uniform(3)).unwrap_err(),
            SessionError::DuplicateCapture(Capture::Ratings)
        );
    }

    #[test]
    fn completeness_and_export() {
        let mut s = session();
        assert!(!s.is_complete());
        s.record_pre(bundle(PamMood::Sad), mins(5)).unwrap();
        s.record_post(bundle(PamMood::Relaxed), mins(9)).unwrap();
        s.record_ratings(QualityRatings::uniform(4)).unwrap();
        for p in s.paintings.clone() {
            assert!(!s.is_complete());
            s.record_reflection(&p, "Peaceful.").unwrap();
        }
        assert!(s.is_complete());
        let back: GuidedSession = serde_json::from_str(&s.export_json()).unwrap();
        assert_eq!(back, s);
    }
}
