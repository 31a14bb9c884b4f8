//! Application layer shared by the HTTP handlers and the command-line tool.
//!
//! Each mutating method runs one core operation on a copy of the affected
//! session, persists the result, and only then swaps the copy in. A failed
//! write leaves memory and disk as they were.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use easel_core::analytics::{
    self, export_csv, export_rows, AnalyticsError, CommandClassifier, LexiconClassifier,
    MoodSummary, PanasSummary, RatingSummary, SentimentClassifier, SessionRow, ThemeCode,
    ThemeCodebook, ThemeStore,
};
use easel_core::catalog::{is_valid_id, load_catalog, Catalog, CatalogError, Painting};
use easel_core::curation::{
    ActionKind, Arm, CurationError, CurationSession, ExpertAction, NewSession, TimingReport,
};
use easel_core::embeddings::{
    uncovered, EmbeddingError, EmbeddingFile, EmbeddingSpace, InterchangeError, InterchangeHeader,
};
use easel_core::recsys::{top_r, RecommendationList, RecsysError};
use easel_core::session::{
    build_session_with_prompts, default_prompts, GuidedSession, InstrumentBundle, InstrumentError,
    NeutralItem, PamMood, PamResponse, PanasItem, PanasResponse, QualityRatings, SessionError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError, SpaceSource};
use crate::store::{FileStore, RecordKind, StoreError, StoreRecord};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("catalog {path}: {source}")]
    Catalog { path: PathBuf, source: CatalogError },
    #[error("embedding space {path}: {reason}")]
    Space { path: PathBuf, reason: String },
    #[error("no embedding space configured")]
    NoSpaces,
    #[error("sentiment lexicon {path}: {reason}")]
    Lexicon { path: PathBuf, reason: String },
    #[error("theme codebook {path}: {reason}")]
    Codebook { path: PathBuf, reason: String },
    #[error("arm_spaces maps {arm} to unknown space {space:?}")]
    ArmSpace { arm: &'static str, space: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("recovering {what} {key:?}: {reason}")]
    Recovery {
        what: &'static str,
        key: String,
        reason: String,
    },
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{kind} {id:?} already exists")]
    AlreadyExists { kind: &'static str, id: String },
    #[error("expected version {expected}, current version is {actual}")]
    VersionConflict { expected: u64, actual: u64 },
    #[error("invalid id {0:?}: use letters, digits, '-' and '_'")]
    InvalidId(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Recsys(#[from] RecsysError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::VersionConflict {
                expected, actual, ..
            } => ServiceError::VersionConflict { expected, actual },
            StoreError::InvalidKey(k) => ServiceError::InvalidId(k),
            other => ServiceError::Store(other),
        }
    }
}

fn instrument_code(e: &InstrumentError) -> &'static str {
    match e {
        InstrumentError::RangeError { .. } => "RangeError",
        InstrumentError::MissingItem(_) => "MissingItem",
        InstrumentError::UnknownItem(_) => "UnknownItem",
    }
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound { .. } => "NotFound",
            ServiceError::AlreadyExists { .. } => "AlreadyExists",
            ServiceError::VersionConflict { .. } => "VersionConflict",
            ServiceError::InvalidId(_) => "InvalidId",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Recsys(e) => e.code(),
            ServiceError::Curation(e) => e.code(),
            ServiceError::Session(e) => e.code(),
            ServiceError::Instrument(e) => instrument_code(e),
            ServiceError::Analytics(e) => e.code(),
            ServiceError::Store(_) => "StoreError",
        }
    }

    /// HTTP status for this error.
    pub fn status(&self) -> u16 {
        match self.code() {
            "NotFound" | "UnknownPainting" | "UnknownSeed" => 404,
            "AlreadyExists" | "VersionConflict" | "IllegalTransition" | "DuplicateCapture"
            | "OutOfOrder" => 409,
            "BadRequest" | "InvalidId" => 400,
            "ClassifierUnavailable" => 503,
            "StoreError" | "MalformedLog" | "BadSequence" | "Export" => 500,
            _ => 422,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// Reads an embedding file in either interchange form. Binary files carry no
/// space or model name, so those come from `space` and `model`.
pub fn read_space_file(
    path: &Path,
    space: Option<&str>,
    model: Option<&str>,
) -> Result<EmbeddingFile, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let file = if EmbeddingFile::looks_binary(&bytes) {
        let (Some(space), Some(model)) = (space, model) else {
            return Err("binary embedding files need `space` and `model` in the config".into());
        };
        let meta = InterchangeHeader {
            space: space.to_string(),
            model: model.to_string(),
            dim: 0,
            normalized: false,
        };
        EmbeddingFile::read_binary(Cursor::new(bytes), meta).map_err(describe_interchange)?
    } else {
        let file = EmbeddingFile::read_jsonl(Cursor::new(bytes)).map_err(describe_interchange)?;
        if let Some(space) = space {
            if space != file.header.space {
                return Err(format!(
                    "config names space {space:?} but the file header says {:?}",
                    file.header.space
                ));
            }
        }
        file
    };
    Ok(file)
}

fn describe_interchange(e: InterchangeError) -> String {
    let name = match &e {
        InterchangeError::MalformedHeader(_) => "MalformedHeader",
        InterchangeError::DimensionMismatch { .. } => "DimensionMismatch",
        InterchangeError::Schema { .. } => "SchemaError",
        _ => "InterchangeError",
    };
    format!("{name}: {e}")
}

fn describe_embedding(e: EmbeddingError) -> String {
    let name = match &e {
        EmbeddingError::DimensionMismatch { .. } => "DimensionMismatch",
        EmbeddingError::UnknownPainting(_) => "UnknownPainting",
        EmbeddingError::DuplicateRecord(_) => "DuplicateRecord",
        _ => "EmbeddingError",
    };
    format!("{name}: {e}")
}

pub fn load_space(source: &SpaceSource, catalog: &Catalog) -> Result<EmbeddingSpace, StartupError> {
    let fail = |reason: String| StartupError::Space {
        path: source.path.clone(),
        reason,
    };
    let file = read_space_file(
        &source.path,
        source.space.as_deref(),
        source.model.as_deref(),
    )
    .map_err(fail)?;
    EmbeddingSpace::from_file(file, Some(catalog)).map_err(|e| fail(describe_embedding(e)))
}

fn now_or(at: Option<DateTime<Utc>>) -> DateTime<Utc> {
    at.unwrap_or_else(Utc::now)
}

fn check_id(id: &str) -> Result<()> {
    if is_valid_id(id) {
        Ok(())
    } else {
        Err(ServiceError::InvalidId(id.to_string()))
    }
}

fn fresh_id(prefix: &str) -> String {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

fn check_version(expected: Option<u64>, actual: u64) -> Result<()> {
    match expected {
        Some(expected) if expected != actual => {
            Err(ServiceError::VersionConflict { expected, actual })
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct RecommendRequest {
    pub space_id: String,
    pub seed_id: String,
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateCuration {
    #[serde(default)]
    pub session_id: Option<String>,
    pub therapist_id: String,
    pub patient_ref: String,
    pub arm: Arm,
    pub seeds: Vec<String>,
    #[serde(default)]
    pub target_per_seed: Option<usize>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct AttachRequest {
    #[serde(default)]
    pub space_id: Option<String>,
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ActionRequest {
    pub kind: ActionKind,
    pub seed_id: String,
    #[serde(default)]
    pub subject_id: Option<String>,
    #[serde(default)]
    pub reason: Option<String>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FinalizeRequest {
    pub picks: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TimingRequest {
    pub minutes: BTreeMap<String, f64>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BuildSessionRequest {
    pub curation_id: String,
    pub seed_id: String,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
}

/// PANAS items arrive as a name → value map so unknown names and
/// out-of-range values surface as instrument errors, not parse failures.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct InstrumentInput {
    #[serde(default)]
    pub pam: Option<PamMood>,
    #[serde(default)]
    pub panas: Option<BTreeMap<String, u8>>,
    #[serde(default)]
    pub neutral: Option<NeutralItem>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub expected_version: Option<u64>,
}

impl InstrumentInput {
    pub fn to_bundle(&self) -> Result<InstrumentBundle> {
        let panas = match &self.panas {
            None => None,
            Some(items) => {
                let parsed = items
                    .iter()
                    .map(|(k, v)| k.parse::<PanasItem>().map(|item| (item, *v)))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let mut r = PanasResponse::new(parsed)?;
                if let Some(n) = &self.neutral {
                    r = r.with_neutral(n.label.clone(), n.value)?;
                }
                Some(r)
            }
        };
        if self.neutral.is_some() && panas.is_none() {
            return Err(ServiceError::BadRequest(
                "neutral item given without panas".into(),
            ));
        }
        let bundle = InstrumentBundle::new(self.pam.map(PamResponse::new), panas);
        if bundle.is_empty() {
            return Err(ServiceError::BadRequest(
                "at least one of pam or panas is required".into(),
            ));
        }
        Ok(bundle)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ReflectionRequest {
    pub painting_id: String,
    pub text: String,
    #[serde(default)]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RatingsRequest {
    #[serde(flatten)]
    pub ratings: QualityRatings,
    #[serde(default)]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ThemeRequest {
    pub reflection_ref: String,
    pub theme: String,
    pub coder_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceInfo {
    pub space_id: String,
    pub model: String,
    pub dim: usize,
    pub count: usize,
    pub zero_vectors: Vec<String>,
    pub uncovered: usize,
}

/// A summary plus which sessions lacked the inputs it needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticsView<T> {
    pub included: usize,
    pub excluded: Vec<String>,
    pub summary: T,
}

#[derive(Debug, Clone)]
pub struct Versioned<T> {
    pub version: u64,
    pub value: T,
}

pub struct Service {
    config: Config,
    catalog: Catalog,
    spaces: BTreeMap<String, EmbeddingSpace>,
    store: FileStore,
    curations: BTreeMap<String, CurationSession>,
    sessions: BTreeMap<String, Versioned<GuidedSession>>,
    themes: ThemeStore,
    classifier: Box<dyn SentimentClassifier>,
    prompts: Vec<String>,
}

impl Service {
    /// Loads catalog and spaces, then rebuilds state from the store.
    pub fn open(config: Config) -> Result<Self, StartupError> {
        let catalog = load_catalog(&config.catalog).map_err(|source| StartupError::Catalog {
            path: config.catalog.clone(),
            source,
        })?;
        if config.spaces.is_empty() {
            return Err(StartupError::NoSpaces);
        }
        let mut spaces = BTreeMap::new();
        for source in &config.spaces {
            let space = load_space(source, &catalog)?;
            for w in space.warnings() {
                tracing::warn!(space = space.space_id(), warning = ?w, "embedding ingest warning");
            }
            let id = space.space_id().to_string();
            if spaces.insert(id.clone(), space).is_some() {
                return Err(StartupError::Space {
                    path: source.path.clone(),
                    reason: format!("space {id:?} is defined twice"),
                });
            }
        }
        for (arm, space) in &config.arm_spaces {
            if !spaces.contains_key(space) {
                return Err(StartupError::ArmSpace {
                    arm: arm.as_str(),
                    space: space.clone(),
                });
            }
        }
        let classifier = classifier_from(&config)?;
        let codebook = match &config.codebook {
            None => ThemeCodebook::default(),
            Some(path) => {
                let fail = |reason: String| StartupError::Codebook {
                    path: path.clone(),
                    reason,
                };
                let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
                serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?
            }
        };
        let prompts = config.prompts.clone().unwrap_or_else(default_prompts);
        let store = FileStore::open(&config.store_dir)?;
        let mut service = Self {
            config,
            catalog,
            spaces,
            store,
            curations: BTreeMap::new(),
            sessions: BTreeMap::new(),
            themes: ThemeStore::new(codebook),
            classifier,
            prompts,
        };
        service.recover()?;
        Ok(service)
    }

    fn recover(&mut self) -> Result<(), StartupError> {
        for (key, events) in self.store.load_logs()? {
            let session = CurationSession::replay(events).map_err(|e| StartupError::Recovery {
                what: "curation",
                key: key.clone(),
                reason: e.to_string(),
            })?;
            if session.session_id() != key {
                return Err(StartupError::Recovery {
                    what: "curation",
                    key,
                    reason: format!("log belongs to session {:?}", session.session_id()),
                });
            }
            self.curations.insert(key, session);
        }
        for record in self.store.list(RecordKind::GuidedSession)? {
            let session: GuidedSession =
                serde_json::from_value(record.body).map_err(|e| StartupError::Recovery {
                    what: "guided session",
                    key: record.key.clone(),
                    reason: e.to_string(),
                })?;
            // the document is written before the curation's delivered event;
            // without that event the build never completed
            let delivered = self.curations.get(&session.curation_ref).is_some_and(|c| {
                c.snapshot()
                    .delivered_sessions
                    .contains(&session.session_id)
            });
            if !delivered {
                tracing::warn!(session = %record.key, "dropping guided session from an unfinished build");
                self.store.remove(RecordKind::GuidedSession, &record.key)?;
                continue;
            }
            self.sessions.insert(
                record.key,
                Versioned {
                    version: record.version,
                    value: session,
                },
            );
        }
        for record in self.store.load_themes()? {
            let code: ThemeCode =
                serde_json::from_value(record.body).map_err(|e| StartupError::Recovery {
                    what: "theme code",
                    key: record.key.clone(),
                    reason: e.to_string(),
                })?;
            self.themes
                .restore(code)
                .map_err(|e| StartupError::Recovery {
                    what: "theme code",
                    key: record.key.clone(),
                    reason: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn paintings(&self) -> Vec<&Painting> {
        self.catalog.iter().collect()
    }

    pub fn painting(&self, id: &str) -> Result<&Painting> {
        self.catalog.get(id).map_err(|_| ServiceError::NotFound {
            kind: "painting",
            id: id.to_string(),
        })
    }

    pub fn spaces(&self) -> Vec<SpaceInfo> {
        self.spaces
            .values()
            .map(|s| SpaceInfo {
                space_id: s.space_id().to_string(),
                model: s.model_name().to_string(),
                dim: s.dim(),
                count: s.len(),
                zero_vectors: s.zero_vectors().map(str::to_owned).collect(),
                uncovered: uncovered(&self.catalog, s).len(),
            })
            .collect()
    }

    fn space(&self, id: &str) -> Result<&EmbeddingSpace> {
        self.spaces.get(id).ok_or_else(|| ServiceError::NotFound {
            kind: "space",
            id: id.to_string(),
        })
    }

    pub fn recommend(&self, req: &RecommendRequest) -> Result<RecommendationList> {
        let space = self.space(&req.space_id)?;
        let excluded: BTreeSet<String> = req.excluded.iter().cloned().collect();
        Ok(top_r(
            space,
            &req.seed_id,
            req.r.unwrap_or(self.config.r_default),
            &excluded,
        )?)
    }

    pub fn curation(&self, id: &str) -> Result<&CurationSession> {
        self.curations
            .get(id)
            .ok_or_else(|| ServiceError::NotFound {
                kind: "curation",
                id: id.to_string(),
            })
    }

    pub fn curation_ids(&self) -> impl Iterator<Item = &str> {
        self.curations.keys().map(String::as_str)
    }

    pub fn create_curation(&mut self, req: CreateCuration) -> Result<&CurationSession> {
        let id = req.session_id.clone().unwrap_or_else(|| fresh_id("cs"));
        check_id(&id)?;
        if self.curations.contains_key(&id) || self.store.log_path(&id)?.exists() {
            return Err(ServiceError::AlreadyExists {
                kind: "curation",
                id,
            });
        }
        let mut new = NewSession::new(
            id.clone(),
            req.therapist_id,
            req.patient_ref,
            req.arm,
            req.seeds,
        );
        if let Some(t) = req.target_per_seed {
            new.target_per_seed = t;
        }
        let session = CurationSession::start(new, &self.catalog, now_or(req.at))?;
        self.store.append_events(&id, session.log())?;
        Ok(self.curations.entry(id).or_insert(session))
    }

    fn mutate_curation(
        &mut self,
        id: &str,
        expected: Option<u64>,
        op: impl FnOnce(&mut CurationSession, &BTreeMap<String, EmbeddingSpace>) -> Result<()>,
    ) -> Result<&CurationSession> {
        let current = self.curation(id)?;
        check_version(expected, current.version())?;
        let before = current.log().len();
        let mut next = current.clone();
        op(&mut next, &self.spaces)?;
        self.store.append_events(id, &next.log()[before..])?;
        self.curations.insert(id.to_string(), next);
        Ok(&self.curations[id])
    }

    /// Space used for a curation's machine lists: the request's, else the
    /// arm's configured space, else the only loaded space.
    fn resolve_space(&self, arm: Arm, requested: Option<&str>) -> Result<String> {
        if let Some(s) = requested {
            return Ok(s.to_string());
        }
        if let Some(s) = self.config.arm_spaces.get(&arm) {
            return Ok(s.clone());
        }
        if self.spaces.len() == 1 {
            return Ok(self.spaces.keys().next().expect("one space").clone());
        }
        Err(CurationError::SpaceRequired.into())
    }

    pub fn attach(&mut self, id: &str, req: AttachRequest) -> Result<&CurationSession> {
        let space_id = self.resolve_space(self.curation(id)?.arm(), req.space_id.as_deref())?;
        self.space(&space_id)?;
        let r = req.r.unwrap_or(self.config.r_default);
        let at = now_or(req.at);
        self.mutate_curation(id, req.expected_version, |c, spaces| {
            Ok(c.attach_recommendations(&spaces[&space_id], r, at)?)
        })
    }

    pub fn action(&mut self, id: &str, req: ActionRequest) -> Result<&CurationSession> {
        let mut action = ExpertAction::new(now_or(req.at), req.kind, req.seed_id);
        if let Some(s) = req.subject_id {
            action = action.subject(s);
        }
        if let Some(r) = req.reason {
            action = action.reason(r);
        }
        self.mutate_curation(id, req.expected_version, |c, spaces| {
            // regenerate re-ranks in the space the seed's list came from
            let space = c
                .list(&action.seed_id)
                .and_then(|l| spaces.get(&l.space_id));
            Ok(c.record_action(action, space)?)
        })
    }

    pub fn finalize(&mut self, id: &str, req: FinalizeRequest) -> Result<&CurationSession> {
        let at = now_or(req.at);
        self.mutate_curation(id, req.expected_version, |c, _| {
            Ok(c.finalize_curation(req.picks, at)?)
        })
    }

    pub fn supply_timing(&mut self, id: &str, req: TimingRequest) -> Result<&CurationSession> {
        let at = now_or(req.at);
        self.mutate_curation(id, req.expected_version, |c, _| {
            Ok(c.supply_timing(req.minutes, at)?)
        })
    }

    pub fn timing(&self, id: &str) -> Result<TimingReport> {
        Ok(self.curation(id)?.timing_report()?)
    }

    pub fn session(&self, id: &str) -> Result<&Versioned<GuidedSession>> {
        self.sessions.get(id).ok_or_else(|| ServiceError::NotFound {
            kind: "session",
            id: id.to_string(),
        })
    }

    pub fn sessions(&self) -> impl Iterator<Item = &GuidedSession> {
        self.sessions.values().map(|v| &v.value)
    }

    pub fn build_session(&mut self, req: BuildSessionRequest) -> Result<&Versioned<GuidedSession>> {
        let session_id = req.session_id.clone().unwrap_or_else(|| fresh_id("gs"));
        check_id(&session_id)?;
        if self.sessions.contains_key(&session_id) {
            return Err(ServiceError::AlreadyExists {
                kind: "session",
                id: session_id,
            });
        }
        let current = self.curation(&req.curation_id)?;
        let before = current.log().len();
        let mut curation = current.clone();
        let session = build_session_with_prompts(
            &mut curation,
            &req.seed_id,
            session_id.clone(),
            self.prompts.clone(),
            now_or(req.at),
        )?;
        let record = self.store.put(
            RecordKind::GuidedSession,
            &session_id,
            0,
            serde_json::to_value(&session).expect("session serializes"),
        )?;
        if let Err(e) = self
            .store
            .append_events(&req.curation_id, &curation.log()[before..])
        {
            self.store.remove(RecordKind::GuidedSession, &session_id)?;
            return Err(e.into());
        }
        self.curations.insert(req.curation_id, curation);
        Ok(self.sessions.entry(session_id).or_insert(Versioned {
            version: record.version,
            value: session,
        }))
    }

    fn mutate_session(
        &mut self,
        id: &str,
        expected: Option<u64>,
        op: impl FnOnce(&mut GuidedSession) -> Result<()>,
    ) -> Result<&Versioned<GuidedSession>> {
        let current = self.session(id)?;
        check_version(expected, current.version)?;
        let mut next = current.value.clone();
        op(&mut next)?;
        let record: StoreRecord = self.store.put(
            RecordKind::GuidedSession,
            id,
            current.version,
            serde_json::to_value(&next).expect("session serializes"),
        )?;
        self.sessions.insert(
            id.to_string(),
            Versioned {
                version: record.version,
                value: next,
            },
        );
        Ok(&self.sessions[id])
    }

    pub fn record_pre(
        &mut self,
        id: &str,
        input: InstrumentInput,
    ) -> Result<&Versioned<GuidedSession>> {
        let bundle = input.to_bundle()?;
        let at = now_or(input.at);
        self.mutate_session(
            id,
            input.expected_version,
            |s| Ok(s.record_pre(bundle, at)?),
        )
    }

    pub fn record_post(
        &mut self,
        id: &str,
        input: InstrumentInput,
    ) -> Result<&Versioned<GuidedSession>> {
        let bundle = input.to_bundle()?;
        let at = now_or(input.at);
        self.mutate_session(id, input.expected_version, |s| {
            Ok(s.record_post(bundle, at)?)
        })
    }

    pub fn record_reflection(
        &mut self,
        id: &str,
        req: ReflectionRequest,
    ) -> Result<&Versioned<GuidedSession>> {
        self.mutate_session(id, req.expected_version, |s| {
            Ok(s.record_reflection(&req.painting_id, req.text)?)
        })
    }

    pub fn record_ratings(
        &mut self,
        id: &str,
        req: RatingsRequest,
    ) -> Result<&Versioned<GuidedSession>> {
        self.mutate_session(id, req.expected_version, |s| {
            Ok(s.record_ratings(req.ratings)?)
        })
    }

    fn partition(
        &self,
        has_inputs: impl Fn(&GuidedSession) -> bool,
    ) -> (Vec<GuidedSession>, Vec<String>) {
        let mut included = Vec::new();
        let mut excluded = Vec::new();
        for s in self.sessions() {
            if has_inputs(s) {
                included.push(s.clone());
            } else {
                excluded.push(s.session_id.clone());
            }
        }
        (included, excluded)
    }

    fn view<T>(
        &self,
        has_inputs: impl Fn(&GuidedSession) -> bool,
        summarize: impl FnOnce(&[GuidedSession]) -> Result<T, AnalyticsError>,
    ) -> Result<AnalyticsView<T>> {
        let (included, excluded) = self.partition(has_inputs);
        Ok(AnalyticsView {
            included: included.len(),
            excluded,
            summary: summarize(&included)?,
        })
    }

    pub fn mood(&self) -> Result<AnalyticsView<MoodSummary>> {
        self.view(
            |s| s.pre.pam.is_some() && s.post.pam.is_some(),
            analytics::mood_summary,
        )
    }

    pub fn panas(&self) -> Result<AnalyticsView<PanasSummary>> {
        self.view(
            |s| s.pre.panas.is_some() && s.post.panas.is_some(),
            analytics::panas_summary,
        )
    }

    pub fn ratings(&self) -> Result<AnalyticsView<RatingSummary>> {
        self.view(|s| s.ratings.is_some(), analytics::rating_summary)
    }

    pub fn export_rows(&self) -> Result<Vec<SessionRow>> {
        let sessions: Vec<GuidedSession> = self.sessions().cloned().collect();
        Ok(export_rows(&sessions, Some(self.classifier.as_ref()))?)
    }

    pub fn export_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        export_csv(&self.export_rows()?, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn record_theme(&mut self, req: ThemeRequest) -> Result<ThemeCode> {
        self.themes.validate(&req.theme)?;
        let code = ThemeCode {
            theme: req.theme,
            coder_id: req.coder_id,
            reflection_ref: req.reflection_ref,
        };
        self.store
            .append_theme(serde_json::to_value(&code).expect("theme code serializes"))?;
        self.themes.restore(code.clone())?;
        Ok(code)
    }

    pub fn themes(&self) -> &ThemeStore {
        &self.themes
    }
}

fn classifier_from(config: &Config) -> Result<Box<dyn SentimentClassifier>, StartupError> {
    let s = &config.sentiment;
    if let Some(cmd) = &s.command {
        let id = s.id.clone().unwrap_or_else(|| cmd[0].clone());
        return Ok(Box::new(CommandClassifier::new(
            id,
            cmd[0].clone(),
            cmd[1..].to_vec(),
        )));
    }
    if let Some(path) = &s.lexicon {
        let fail = |reason: String| StartupError::Lexicon {
            path: path.clone(),
            reason,
        };
        let f = File::open(path).map_err(|e| fail(e.to_string()))?;
        let id = s.id.clone().unwrap_or_else(|| "lexicon-custom".into());
        let lex = LexiconClassifier::from_reader(id, BufReader::new(f))
            .map_err(|e| fail(e.to_string()))?;
        return Ok(Box::new(lex));
    }
    Ok(Box::new(LexiconClassifier::default()))
}
