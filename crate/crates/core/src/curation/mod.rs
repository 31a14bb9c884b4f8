//! The therapist review workflow.
//!
//! A [`CurationSession`] moves through
//!
//! ```text
//! HITL arms:    elicited -> recommended -> under_review -> curated -> delivered
//! expert_only:  elicited ---------------> under_review -> curated -> delivered
//! ```
//!
//! Every mutation is expressed as a [`CurationEvent`] appended to the
//! session's log and applied by a single validating `apply` step. Replaying a
//! log through [`CurationSession::replay`] therefore runs exactly the checks
//! the live operations ran and rebuilds the same state.

mod log;
mod timing;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::embeddings::EmbeddingSpace;
use crate::recsys::{self, RecommendationList, RecsysError};

pub use log::{read_event_log, write_event_log, LoggedEvent};
pub use timing::{SeedMinutes, TimingReport};

pub const MAX_SEEDS: usize = 3;
pub const DEFAULT_TARGET_PER_SEED: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    ExpertOnly,
    HitlVisual,
    HitlMultimodal,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::ExpertOnly, Arm::HitlVisual, Arm::HitlMultimodal];

    pub fn uses_machine_lists(self) -> bool {
        !matches!(self, Arm::ExpertOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::ExpertOnly => "expert_only",
            Arm::HitlVisual => "hitl_visual",
            Arm::HitlMultimodal => "hitl_multimodal",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurationState {
    Elicited,
    Recommended,
    UnderReview,
    Curated,
    Delivered,
}

impl CurationState {
    pub const ALL: [CurationState; 5] = [
        CurationState::Elicited,
        CurationState::Recommended,
        CurationState::UnderReview,
        CurationState::Curated,
        CurationState::Delivered,
    ];
}

impl fmt::Display for CurationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CurationState::Elicited => "elicited",
            CurationState::Recommended => "recommended",
            CurationState::UnderReview => "under_review",
            CurationState::Curated => "curated",
            CurationState::Delivered => "delivered",
        };
        f.write_str(s)
    }
}

/// Operations gated by the state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Attach,
    RecordAction,
    Finalize,
    Deliver,
    TimingReport,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::Attach,
        Operation::RecordAction,
        Operation::Finalize,
        Operation::Deliver,
        Operation::TimingReport,
    ];
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Operation::Attach => "attach",
            Operation::RecordAction => "record_action",
            Operation::Finalize => "finalize",
            Operation::Deliver => "deliver",
            Operation::TimingReport => "timing_report",
        };
        f.write_str(s)
    }
}

/// The legal edge set. Returns the state after `op`, or `None` if `op` is
/// not permitted from `state` for `arm`.
pub fn transition(arm: Arm, state: CurationState, op: Operation) -> Option<CurationState> {
    use CurationState::*;
    match (op, state) {
        (Operation::Attach, Elicited) if arm.uses_machine_lists() => Some(Recommended),
        (Operation::RecordAction, Recommended) if arm.uses_machine_lists() => Some(UnderReview),
        (Operation::RecordAction, Elicited) if !arm.uses_machine_lists() => Some(UnderReview),
        (Operation::RecordAction, UnderReview) => Some(UnderReview),
        (Operation::Finalize, UnderReview) => Some(Curated),
        // one curation can feed several guided sessions, one per seed
        (Operation::Deliver, Curated | Delivered) => Some(Delivered),
        (Operation::TimingReport, Curated | Delivered) => Some(state),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    View,
    Accept,
    Reject,
    Flag,
    ManualAdd,
    Regenerate,
    Finalize,
}

impl ActionKind {
    pub fn needs_reason(self) -> bool {
        matches!(self, ActionKind::Flag | ActionKind::Reject)
    }

    pub fn needs_subject(self) -> bool {
        !matches!(self, ActionKind::Regenerate | ActionKind::Finalize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertAction {
    pub at: DateTime<Utc>,
    pub kind: ActionKind,
    pub seed_id: String,
    #[serde(default)]
    pub subject_id: String,
    #[serde(default)]
    pub reason: String,
}

impl ExpertAction {
    pub fn new(at: DateTime<Utc>, kind: ActionKind, seed_id: impl Into<String>) -> Self {
        Self {
            at,
            kind,
            seed_id: seed_id.into(),
            subject_id: String::new(),
            reason: String::new(),
        }
    }

    pub fn subject(mut self, id: impl Into<String>) -> Self {
        self.subject_id = id.into();
        self
    }

    pub fn reason(mut self, reason: impl Into<String>) -> Self {
        self.reason = reason.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum CurationEvent {
    Started {
        session_id: String,
        therapist_id: String,
        patient_ref: String,
        arm: Arm,
        seeds: Vec<String>,
        target_per_seed: usize,
    },
    Attached {
        lists: BTreeMap<String, RecommendationList>,
    },
    Action {
        action: ExpertAction,
        /// Present exactly for regenerate actions: the replacement list.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regenerated: Option<RecommendationList>,
    },
    Finalized {
        picks: BTreeMap<String, Vec<String>>,
    },
    Delivered {
        guided_session_id: String,
    },
    /// Headless per-seed durations, used instead of action timestamps.
    TimingSupplied {
        minutes: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurationError {
    #[error("illegal transition: {operation} in state {state}")]
    IllegalTransition {
        state: CurationState,
        operation: Operation,
    },
    #[error("a session needs at least one seed")]
    EmptySeeds,
    #[error("at most {MAX_SEEDS} seeds allowed, got {0}")]
    TooManySeeds(usize),
    #[error("seed {0:?} listed twice")]
    DuplicateSeed(String),
    #[error("target_per_seed must be at least 1")]
    ZeroTarget,
    #[error("unknown painting {0:?}")]
    UnknownPainting(String),
    #[error("{0:?} is not a seed of this session")]
    UnknownSeed(String),
    #[error("{0:?} actions require a reason")]
    MissingReason(ActionKind),
    #[error("{0:?} actions require a subject painting")]
    MissingSubject(ActionKind),
    #[error("seed {seed:?}: got {got} picks, want {want}")]
    WrongPickCount {
        seed: String,
        got: usize,
        want: usize,
    },
    #[error("seed {seed:?}: {id:?} picked twice")]
    DuplicatePick { seed: String, id: String },
    #[error("seed {seed:?}: {id:?} is neither in the list nor manually added")]
    NotInList { seed: String, id: String },
    #[error("regenerate needs the embedding space the list came from")]
    SpaceRequired,
    #[error("list was built in space {expected:?}, got {got:?}")]
    SpaceMismatch { expected: String, got: String },
    #[error("recommendation list violates the session: {0}")]
    InvalidList(String),
    #[error(transparent)]
    Recsys(#[from] RecsysError),
    #[error("timestamp {got} precedes previous event at {last}")]
    NonMonotonicTime {
        last: DateTime<Utc>,
        got: DateTime<Utc>,
    },
    #[error("expected seq {expected}, got {got}")]
    BadSequence { expected: u64, got: u64 },
    #[error("invalid duration for seed {0:?}")]
    InvalidTiming(String),
    #[error("no timing data for seed {0:?}")]
    MissingTiming(String),
    #[error("malformed event log: {0}")]
    MalformedLog(String),
}

impl CurationError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            CurationError::IllegalTransition { .. } => "IllegalTransition",
            CurationError::EmptySeeds => "EmptySeeds",
            CurationError::TooManySeeds(_) => "TooManySeeds",
            CurationError::DuplicateSeed(_) => "DuplicateSeed",
            CurationError::ZeroTarget => "ZeroTarget",
            CurationError::UnknownPainting(_) => "UnknownPainting",
            CurationError::UnknownSeed(_) => "UnknownSeed",
            CurationError::MissingReason(_) => "MissingReason",
            CurationError::MissingSubject(_) => "MissingSubject",
            CurationError::WrongPickCount { .. } => "WrongPickCount",
            CurationError::DuplicatePick { .. } => "DuplicatePick",
            CurationError::NotInList { .. } => "NotInList",
            CurationError::SpaceRequired => "SpaceRequired",
            CurationError::SpaceMismatch { .. } => "SpaceMismatch",
            CurationError::InvalidList(_) => "InvalidList",
            CurationError::Recsys(e) => e.code(),
            CurationError::NonMonotonicTime { .. } => "NonMonotonicTime",
            CurationError::BadSequence { .. } => "BadSequence",
            CurationError::InvalidTiming(_) => "InvalidTiming",
            CurationError::MissingTiming(_) => "MissingTiming",
            CurationError::MalformedLog(_) => "MalformedLog",
        }
    }
}

pub struct NewSession {
    pub session_id: String,
    pub therapist_id: String,
    pub patient_ref: String,
    pub arm: Arm,
    pub seeds: Vec<String>,
    pub target_per_seed: usize,
}

impl NewSession {
    pub fn new(
        session_id: impl Into<String>,
        therapist_id: impl Into<String>,
        patient_ref: impl Into<String>,
        arm: Arm,
        seeds: Vec<String>,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            therapist_id: therapist_id.into(),
            patient_ref: patient_ref.into(),
            arm,
            seeds,
            target_per_seed: DEFAULT_TARGET_PER_SEED,
        }
    }
}

/// Materialized view of a session, as exported and compared on replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurationSnapshot<'a> {
    pub session_id: &'a str,
    pub therapist_id: &'a str,
    pub patient_ref: &'a str,
    pub arm: Arm,
    pub state: CurationState,
    pub seeds: &'a [String],
    pub target_per_seed: usize,
    pub lists: &'a BTreeMap<String, RecommendationList>,
    pub actions: &'a [ExpertAction],
    pub rejected: &'a BTreeMap<String, BTreeSet<String>>,
    pub manual_added: &'a BTreeMap<String, BTreeSet<String>>,
    pub curated: &'a BTreeMap<String, Vec<String>>,
    pub delivered_sessions: &'a [String],
    pub supplied_minutes: Option<&'a BTreeMap<String, f64>>,
    pub version: u64,
}

#[derive(Debug, Clone)]
pub struct CurationSession {
    session_id: String,
    therapist_id: String,
    patient_ref: String,
    arm: Arm,
    seeds: Vec<String>,
    target_per_seed: usize,
    state: CurationState,
    lists: BTreeMap<String, RecommendationList>,
    actions: Vec<ExpertAction>,
    rejected: BTreeMap<String, BTreeSet<String>>,
    manual_added: BTreeMap<String, BTreeSet<String>>,
    curated: BTreeMap<String, Vec<String>>,
    delivered_sessions: Vec<String>,
    supplied_minutes: Option<BTreeMap<String, f64>>,
    finalized_at: Option<DateTime<Utc>>,
    log: Vec<LoggedEvent>,
}

impl CurationSession {
    /// Opens a session in state `elicited`. Seeds must exist in `catalog`.
    pub fn start(
        req: NewSession,
        catalog: &Catalog,
        at: DateTime<Utc>,
    ) -> Result<Self, CurationError> {
        for seed in &req.seeds {
            if !catalog.contains(seed) {
                return Err(CurationError::UnknownPainting(seed.clone()));
            }
        }
        let event = CurationEvent::Started {
            session_id: req.session_id,
            therapist_id: req.therapist_id,
            patient_ref: req.patient_ref,
            arm: req.arm,
            seeds: req.seeds,
            target_per_seed: req.target_per_seed,
        };
        Self::from_first(LoggedEvent { seq: 1, at, event })
    }

    fn from_first(first: LoggedEvent) -> Result<Self, CurationError> {
        let CurationEvent::Started {
            session_id,
            therapist_id,
            patient_ref,
            arm,
            seeds,
            target_per_seed,
        } = &first.event
        else {
            return Err(CurationError::MalformedLog(
                "first event must be `started`".into(),
            ));
        };
        if first.seq != 1 {
            return Err(CurationError::BadSequence {
                expected: 1,
                got: first.seq,
            });
        }
        if seeds.is_empty() {
            return Err(CurationError::EmptySeeds);
        }
        if seeds.len() > MAX_SEEDS {
            return Err(CurationError::TooManySeeds(seeds.len()));
        }
        let mut seen = BTreeSet::new();
        for seed in seeds {
            if !seen.insert(seed) {
                return Err(CurationError::DuplicateSeed(seed.clone()));
            }
        }
        if *target_per_seed == 0 {
            return Err(CurationError::ZeroTarget);
        }
        Ok(Self {
            session_id: session_id.clone(),
            therapist_id: therapist_id.clone(),
            patient_ref: patient_ref.clone(),
            arm: *arm,
            seeds: seeds.clone(),
            target_per_seed: *target_per_seed,
            state: CurationState::Elicited,
            lists: BTreeMap::new(),
            actions: Vec::new(),
            rejected: BTreeMap::new(),
            manual_added: BTreeMap::new(),
            curated: BTreeMap::new(),
            delivered_sessions: Vec::new(),
            supplied_minutes: None,
            finalized_at: None,
            log: vec![first],
        })
    }

    /// Rebuilds a session from its event log, re-running every check.
    pub fn replay(events: impl IntoIterator<Item = LoggedEvent>) -> Result<Self, CurationError> {
        let mut events = events.into_iter();
        let first = events
            .next()
            .ok_or_else(|| CurationError::MalformedLog("empty log".into()))?;
        let mut session = Self::from_first(first)?;
        for event in events {
            session.apply(event)?;
        }
        Ok(session)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn therapist_id(&self) -> &str {
        &self.therapist_id
    }

    pub fn patient_ref(&self) -> &str {
        &self.patient_ref
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn state(&self) -> CurationState {
        self.state
    }

    pub fn seeds(&self) -> &[String] {
        &self.seeds
    }

    pub fn target_per_seed(&self) -> usize {
        self.target_per_seed
    }

    pub fn list(&self, seed: &str) -> Option<&RecommendationList> {
        self.lists.get(seed)
    }

    pub fn lists(&self) -> &BTreeMap<String, RecommendationList> {
        &self.lists
    }

    pub fn actions(&self) -> &[ExpertAction] {
        &self.actions
    }

    pub fn curated(&self) -> &BTreeMap<String, Vec<String>> {
        &self.curated
    }

    pub fn rejected(&self, seed: &str) -> Option<&BTreeSet<String>> {
        self.rejected.get(seed)
    }

    pub fn is_manual(&self, seed: &str, id: &str) -> bool {
        self.manual_added.get(seed).is_some_and(|s| s.contains(id))
    }

    pub fn log(&self) -> &[LoggedEvent] {
        &self.log
    }

    /// Number of applied events; used for optimistic concurrency.
    pub fn version(&self) -> u64 {
        self.log.len() as u64
    }

    /// The current list for `seed` with rejected paintings hidden.
    pub fn candidates(&self, seed: &str) -> Vec<&str> {
        let rejected = self.rejected.get(seed);
        self.lists
            .get(seed)
            .map(|l| {
                l.ids()
                    .filter(|id| !rejected.is_some_and(|r| r.contains(*id)))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn snapshot(&self) -> CurationSnapshot<'_> {
        CurationSnapshot {
            session_id: &self.session_id,
            therapist_id: &self.therapist_id,
            patient_ref: &self.patient_ref,
            arm: self.arm,
            state: self.state,
            seeds: &self.seeds,
            target_per_seed: self.target_per_seed,
            lists: &self.lists,
            actions: &self.actions,
            rejected: &self.rejected,
            manual_added: &self.manual_added,
            curated: &self.curated,
            delivered_sessions: &self.delivered_sessions,
            supplied_minutes: self.supplied_minutes.as_ref(),
            version: self.version(),
        }
    }

    /// Canonical JSON export of the materialized state.
    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes")
    }

    fn require(&self, op: Operation) -> Result<CurationState, CurationError> {
        transition(self.arm, self.state, op).ok_or(CurationError::IllegalTransition {
            state: self.state,
            operation: op,
        })
    }

    fn require_seed(&self, seed: &str) -> Result<(), CurationError> {
        if self.seeds.iter().any(|s| s == seed) {
            Ok(())
        } else {
            Err(CurationError::UnknownSeed(seed.to_string()))
        }
    }

    fn push(&mut self, at: DateTime<Utc>, event: CurationEvent) -> Result<(), CurationError> {
        let seq = self.version() + 1;
        self.apply(LoggedEvent { seq, at, event })
    }

    /// Validates `logged` against the current state and applies it.
    fn apply(&mut self, logged: LoggedEvent) -> Result<(), CurationError> {
        let expected = self.version() + 1;
        if logged.seq != expected {
            return Err(CurationError::BadSequence {
                expected,
                got: logged.seq,
            });
        }
        let last = self.log.last().map(|e| e.at).expect("log starts non-empty");
        if logged.at < last {
            return Err(CurationError::NonMonotonicTime {
                last,
                got: logged.at,
            });
        }
        match &logged.event {
            CurationEvent::Started { .. } => {
                return Err(CurationError::MalformedLog(
                    "`started` may only be the first event".into(),
                ))
            }
            CurationEvent::Attached { lists } => {
                let next = self.require(Operation::Attach)?;
                self.check_attached(lists)?;
                self.lists = lists.clone();
                self.state = next;
            }
            CurationEvent::Action {
                action,
                regenerated,
            } => {
                let next = self.require(Operation::RecordAction)?;
                if action.at != logged.at {
                    return Err(CurationError::MalformedLog(
                        "action timestamp differs from event timestamp".into(),
                    ));
                }
                self.check_action(action, regenerated.as_ref())?;
                let seed = action.seed_id.clone();
                match action.kind {
                    ActionKind::Reject => {
                        self.rejected
                            .entry(seed)
                            .or_default()
                            .insert(action.subject_id.clone());
                    }
                    ActionKind::ManualAdd => {
                        self.manual_added
                            .entry(seed)
                            .or_default()
                            .insert(action.subject_id.clone());
                    }
                    ActionKind::Regenerate => {
                        let list = regenerated.clone().expect("checked above");
                        self.lists.insert(seed, list);
                    }
                    ActionKind::View
                    | ActionKind::Accept
                    | ActionKind::Flag
                    | ActionKind::Finalize => {}
                }
                self.actions.push(action.clone());
                self.state = next;
            }
            CurationEvent::Finalized { picks } => {
                let next = self.require(Operation::Finalize)?;
                self.check_picks(picks)?;
                self.curated = picks.clone();
                self.finalized_at = Some(logged.at);
                self.state = next;
            }
            CurationEvent::Delivered { guided_session_id } => {
                let next = self.require(Operation::Deliver)?;
                self.delivered_sessions.push(guided_session_id.clone());
                self.state = next;
            }
            CurationEvent::TimingSupplied { minutes } => {
                for (seed, m) in minutes {
                    self.require_seed(seed)?;
                    if !m.is_finite() || *m < 0.0 {
                        return Err(CurationError::InvalidTiming(seed.clone()));
                    }
                }
                if let Some(seed) = self.seeds.iter().find(|s| !minutes.contains_key(*s)) {
                    return Err(CurationError::MissingTiming(seed.clone()));
                }
                self.supplied_minutes = Some(minutes.clone());
            }
        }
        self.log.push(logged);
        Ok(())
    }

    fn check_attached(
        &self,
        lists: &BTreeMap<String, RecommendationList>,
    ) -> Result<(), CurationError> {
        for seed in &self.seeds {
            let list = lists
                .get(seed)
                .ok_or_else(|| CurationError::InvalidList(format!("no list for seed {seed:?}")))?;
            self.check_list(seed, list)?;
        }
        if let Some(extra) = lists.keys().find(|k| !self.seeds.contains(k)) {
            return Err(CurationError::UnknownSeed(extra.clone()));
        }
        Ok(())
    }

    fn check_list(&self, seed: &str, list: &RecommendationList) -> Result<(), CurationError> {
        if list.seed_id != seed {
            return Err(CurationError::InvalidList(format!(
                "list for {seed:?} was built for {:?}",
                list.seed_id
            )));
        }
        if list.contains(seed) {
            return Err(CurationError::InvalidList(
                "seed appears in its own list".into(),
            ));
        }
        if let Some(rejected) = self.rejected.get(seed) {
            if let Some(id) = list.ids().find(|id| rejected.contains(*id)) {
                return Err(CurationError::InvalidList(format!(
                    "rejected painting {id:?} reappears"
                )));
            }
        }
        Ok(())
    }

    fn check_action(
        &self,
        action: &ExpertAction,
        regenerated: Option<&RecommendationList>,
    ) -> Result<(), CurationError> {
        self.require_seed(&action.seed_id)?;
        if action.kind.needs_subject() && action.subject_id.is_empty() {
            return Err(CurationError::MissingSubject(action.kind));
        }
        if action.kind.needs_reason() && action.reason.trim().is_empty() {
            return Err(CurationError::MissingReason(action.kind));
        }
        match (action.kind, regenerated) {
            (ActionKind::Regenerate, _) if !self.arm.uses_machine_lists() => {
                Err(CurationError::IllegalTransition {
                    state: self.state,
                    operation: Operation::RecordAction,
                })
            }
            (ActionKind::Regenerate, Some(list)) => {
                let old = &self.lists[&action.seed_id];
                if list.space_id != old.space_id || list.r != old.r {
                    return Err(CurationError::InvalidList(
                        "regenerated list changes space or r".into(),
                    ));
                }
                self.check_list(&action.seed_id, list)
            }
            (ActionKind::Regenerate, None) => Err(CurationError::InvalidList(
                "regenerate event carries no list".into(),
            )),
            (_, Some(_)) => Err(CurationError::InvalidList(
                "only regenerate events carry a list".into(),
            )),
            (ActionKind::Accept, None) if self.arm.uses_machine_lists() => {
                let seed = &action.seed_id;
                let id = &action.subject_id;
                if self.candidates(seed).contains(&id.as_str()) || self.is_manual(seed, id) {
                    Ok(())
                } else {
                    Err(CurationError::NotInList {
                        seed: seed.clone(),
                        id: id.clone(),
                    })
                }
            }
            _ => Ok(()),
        }
    }

    fn check_picks(&self, picks: &BTreeMap<String, Vec<String>>) -> Result<(), CurationError> {
        if let Some(extra) = picks.keys().find(|k| !self.seeds.contains(k)) {
            return Err(CurationError::UnknownSeed(extra.clone()));
        }
        for seed in &self.seeds {
            let chosen = picks.get(seed).map(Vec::as_slice).unwrap_or_default();
            if chosen.len() != self.target_per_seed {
                return Err(CurationError::WrongPickCount {
                    seed: seed.clone(),
                    got: chosen.len(),
                    want: self.target_per_seed,
                });
            }
            let mut seen = BTreeSet::new();
            for id in chosen {
                if !seen.insert(id) {
                    return Err(CurationError::DuplicatePick {
                        seed: seed.clone(),
                        id: id.clone(),
                    });
                }
                if self.is_manual(seed, id) {
                    continue;
                }
                let allowed = if self.arm.uses_machine_lists() {
                    self.candidates(seed).contains(&id.as_str())
                } else {
                    // no machine list: the expert must have accepted it while browsing
                    self.actions.iter().any(|a| {
                        a.kind == ActionKind::Accept && a.seed_id == *seed && a.subject_id == *id
                    })
                };
                if !allowed {
                    return Err(CurationError::NotInList {
                        seed: seed.clone(),
                        id: id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Ranks the top `r` for every seed and moves to `recommended`.
    pub fn attach_recommendations(
        &mut self,
        space: &EmbeddingSpace,
        r: usize,
        at: DateTime<Utc>,
    ) -> Result<(), CurationError> {
        self.require(Operation::Attach)?;
        let mut lists = BTreeMap::new();
        for seed in &self.seeds {
            let list = recsys::top_r_at(space, seed, r, &BTreeSet::new(), at)?;
            lists.insert(seed.clone(), list);
        }
        self.push(at, CurationEvent::Attached { lists })
    }

    /// Appends an expert action. A regenerate action re-ranks the seed's list
    /// with every painting rejected so far excluded, which needs `space`.
    pub fn record_action(
        &mut self,
        action: ExpertAction,
        space: Option<&EmbeddingSpace>,
    ) -> Result<(), CurationError> {
        self.require(Operation::RecordAction)?;
        let regenerated = if action.kind == ActionKind::Regenerate {
            self.require_seed(&action.seed_id)?;
            if !self.arm.uses_machine_lists() {
                return Err(CurationError::IllegalTransition {
                    state: self.state,
                    operation: Operation::RecordAction,
                });
            }
            let space = space.ok_or(CurationError::SpaceRequired)?;
            let previous = &self.lists[&action.seed_id];
            if space.space_id() != previous.space_id {
                return Err(CurationError::SpaceMismatch {
                    expected: previous.space_id.clone(),
                    got: space.space_id().to_string(),
                });
            }
            let rejected = self
                .rejected
                .get(&action.seed_id)
                .cloned()
                .unwrap_or_default();
            Some(recsys::regenerate_at(
                space, previous, &rejected, action.at,
            )?)
        } else {
            None
        };
        let at = action.at;
        self.push(
            at,
            CurationEvent::Action {
                action,
                regenerated,
            },
        )
    }

    pub fn finalize_curation(
        &mut self,
        picks: BTreeMap<String, Vec<String>>,
        at: DateTime<Utc>,
    ) -> Result<(), CurationError> {
        self.require(Operation::Finalize)?;
        self.push(at, CurationEvent::Finalized { picks })
    }

    /// Records that a guided session was built from this curation.
    pub fn mark_delivered(
        &mut self,
        guided_session_id: impl Into<String>,
        at: DateTime<Utc>,
    ) -> Result<(), CurationError> {
        self.require(Operation::Deliver)?;
        self.push(
            at,
            CurationEvent::Delivered {
                guided_session_id: guided_session_id.into(),
            },
        )
    }

    /// Supplies per-seed durations directly (headless runs without UI timestamps).
    pub fn supply_timing(
        &mut self,
        minutes: BTreeMap<String, f64>,
        at: DateTime<Utc>,
    ) -> Result<(), CurationError> {
        self.push(at, CurationEvent::TimingSupplied { minutes })
    }

    /// Per-seed selection time. Supplied durations win; otherwise each seed
    /// runs from its first `view` (or first action) to its last `finalize`
    /// action, or to the curation's finalization when it has none.
    pub fn timing_report(&self) -> Result<TimingReport, CurationError> {
        self.require(Operation::TimingReport)?;
        let per_seed: Vec<(String, f64)> = match &self.supplied_minutes {
            Some(minutes) => self.seeds.iter().map(|s| (s.clone(), minutes[s])).collect(),
            None => {
                let mut out = Vec::with_capacity(self.seeds.len());
                for seed in &self.seeds {
                    let mine: Vec<&ExpertAction> =
                        self.actions.iter().filter(|a| a.seed_id == *seed).collect();
                    let start = mine
                        .iter()
                        .find(|a| a.kind == ActionKind::View)
                        .or_else(|| mine.first())
                        .map(|a| a.at)
                        .ok_or_else(|| CurationError::MissingTiming(seed.clone()))?;
                    let end = mine
                        .iter()
                        .rev()
                        .find(|a| a.kind == ActionKind::Finalize)
                        .map(|a| a.at)
                        .or(self.finalized_at)
                        .ok_or_else(|| CurationError::MissingTiming(seed.clone()))?;
                    let minutes = (end - start).num_milliseconds() as f64 / 60_000.0;
                    out.push((seed.clone(), minutes));
                }
                out
            }
        };
        TimingReport::from_minutes(per_seed)
            .ok_or_else(|| CurationError::InvalidTiming(self.session_id.clone()))
    }
}

#[cfg(test)]
mod tests;
