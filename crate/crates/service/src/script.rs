//! Scripted workflows for headless runs.
//!
//! A script is JSON Lines, one operation per line, tagged by `op`. Fields
//! match the HTTP request bodies, with the path id moved into the body
//! (`curation_id` or `session_id`). Two conveniences exist only here:
//! `subject_rank` on actions and `pick_ranks` on finalize name paintings by
//! their 1-based position among the seed's current candidates, and
//! `painting_index` on reflections picks by position in the session.
//!
//! ```text
//! {"op":"start","session_id":"cs-1","therapist_id":"t1","patient_ref":"p1","arm":"hitl_visual","seeds":["el-01"]}
//! {"op":"attach","curation_id":"cs-1","r":17}
//! {"op":"action","curation_id":"cs-1","kind":"reject","seed_id":"el-01","subject_rank":1,"reason":"too dark"}
//! {"op":"action","curation_id":"cs-1","kind":"regenerate","seed_id":"el-01"}
//! {"op":"finalize","curation_id":"cs-1","pick_ranks":{"el-01":[1,2,3]}}
//! {"op":"build_session","curation_id":"cs-1","seed_id":"el-01","session_id":"gs-1"}
//! ```

use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::{DateTime, Utc};
use easel_core::curation::ActionKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::service::{
    ActionRequest, AttachRequest, BuildSessionRequest, CreateCuration, FinalizeRequest,
    InstrumentInput, RatingsRequest, ReflectionRequest, ServiceError, ThemeRequest, TimingRequest,
};
use crate::Service;

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptOp {
    Start(CreateCuration),
    Attach {
        curation_id: String,
        #[serde(flatten)]
        req: AttachRequest,
    },
    Action {
        curation_id: String,
        kind: ActionKind,
        seed_id: String,
        #[serde(default)]
        subject_id: Option<String>,
        #[serde(default)]
        subject_rank: Option<usize>,
        #[serde(default)]
        reason: Option<String>,
        #[serde(default)]
        at: Option<DateTime<Utc>>,
    },
    Finalize {
        curation_id: String,
        #[serde(default)]
        picks: BTreeMap<String, Vec<String>>,
        #[serde(default)]
        pick_ranks: BTreeMap<String, Vec<usize>>,
        #[serde(default)]
        at: Option<DateTime<Utc>>,
    },
    Timing {
        curation_id: String,
        #[serde(flatten)]
        req: TimingRequest,
    },
    BuildSession(BuildSessionRequest),
    Pre {
        session_id: String,
        #[serde(flatten)]
        input: InstrumentInput,
    },
    Post {
        session_id: String,
        #[serde(flatten)]
        input: InstrumentInput,
    },
    Reflection {
        session_id: String,
        #[serde(default)]
        painting_id: Option<String>,
        #[serde(default)]
        painting_index: Option<usize>,
        text: String,
    },
    Ratings {
        session_id: String,
        #[serde(flatten)]
        req: RatingsRequest,
    },
    Theme(ThemeRequest),
}

/// What one script line did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub line: usize,
    pub op: &'static str,
    pub id: String,
    pub version: u64,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: cannot parse operation: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Op { line: usize, source: ServiceError },
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
}

impl ScriptError {
    pub fn code(&self) -> &'static str {
        match self {
            ScriptError::Parse { .. } => "BadRequest",
            ScriptError::Op { source, .. } => source.code(),
            ScriptError::Io(_) => "Io",
        }
    }
}

fn by_rank(
    service: &Service,
    curation_id: &str,
    seed: &str,
    rank: usize,
) -> Result<String, ServiceError> {
    let candidates = service.curation(curation_id)?.candidates(seed);
    rank.checked_sub(1)
        .and_then(|i| candidates.get(i))
        .map(|s| s.to_string())
        .ok_or_else(|| {
            ServiceError::BadRequest(format!(
                "rank {rank} is outside the {} candidates for seed {seed:?}",
                candidates.len()
            ))
        })
}

fn apply(service: &mut Service, op: ScriptOp) -> Result<(&'static str, String, u64), ServiceError> {
    Ok(match op {
        ScriptOp::Start(req) => {
            let c = service.create_curation(req)?;
            ("start", c.session_id().to_string(), c.version())
        }
        ScriptOp::Attach { curation_id, req } => {
            let v = service.attach(&curation_id, req)?.version();
            ("attach", curation_id, v)
        }
        ScriptOp::Action {
            curation_id,
            kind,
            seed_id,
            subject_id,
            subject_rank,
            reason,
            at,
        } => {
            let subject_id = match (subject_id, subject_rank) {
                (Some(_), Some(_)) => {
                    return Err(ServiceError::BadRequest(
                        "give subject_id or subject_rank, not both".into(),
                    ))
                }
                (None, Some(rank)) => Some(by_rank(service, &curation_id, &seed_id, rank)?),
                (id, None) => id,
            };
            let req = ActionRequest {
                kind,
                seed_id,
                subject_id,
                reason,
                at,
                expected_version: None,
            };
            let v = service.action(&curation_id, req)?.version();
            ("action", curation_id, v)
        }
        ScriptOp::Finalize {
            curation_id,
            mut picks,
            pick_ranks,
            at,
        } => {
            for (seed, ranks) in pick_ranks {
                if picks.contains_key(&seed) {
                    return Err(ServiceError::BadRequest(format!(
                        "seed {seed:?} has both picks and pick_ranks"
                    )));
                }
                let ids = ranks
                    .iter()
                    .map(|&r| by_rank(service, &curation_id, &seed, r))
                    .collect::<Result<Vec<_>, _>>()?;
                picks.insert(seed, ids);
            }
            let req = FinalizeRequest {
                picks,
                at,
                expected_version: None,
            };
            let v = service.finalize(&curation_id, req)?.version();
            ("finalize", curation_id, v)
        }
        ScriptOp::Timing { curation_id, req } => {
            let v = service.supply_timing(&curation_id, req)?.version();
            ("timing", curation_id, v)
        }
        ScriptOp::BuildSession(req) => {
            let s = service.build_session(req)?;
            ("build_session", s.value.session_id.clone(), s.version)
        }
        ScriptOp::Pre { session_id, input } => {
            let v = service.record_pre(&session_id, input)?.version;
            ("pre", session_id, v)
        }
        ScriptOp::Post { session_id, input } => {
            let v = service.record_post(&session_id, input)?.version;
            ("post", session_id, v)
        }
        ScriptOp::Reflection {
            session_id,
            painting_id,
            painting_index,
            text,
        } => {
            let painting_id = match (painting_id, painting_index) {
                (Some(id), None) => id,
                (None, Some(i)) => service
                    .session(&session_id)?
                    .value
                    .paintings
                    .get(i)
                    .cloned()
                    .ok_or_else(|| {
                        ServiceError::BadRequest(format!("painting_index {i} out of range"))
                    })?,
                _ => {
                    return Err(ServiceError::BadRequest(
                        "give exactly one of painting_id or painting_index".into(),
                    ))
                }
            };
            let req = ReflectionRequest {
                painting_id,
                text,
                expected_version: None,
            };
            let v = service.record_reflection(&session_id, req)?.version;
            ("reflection", session_id, v)
        }
        ScriptOp::Ratings { session_id, req } => {
            let v = service.record_ratings(&session_id, req)?.version;
            ("ratings", session_id, v)
        }
        ScriptOp::Theme(req) => {
            let code = service.record_theme(req)?;
            (
                "theme",
                code.reflection_ref,
                service.themes().all().len() as u64,
            )
        }
    })
}

/// Runs every line of `script`, stopping at the first failure. Blank lines
/// and lines starting with `#` are skipped.
pub fn run_script<R: BufRead>(service: &mut Service, script: R) -> Result<Vec<Step>, ScriptError> {
    let mut steps = Vec::new();
    for (i, line) in script.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let op: ScriptOp = serde_json::from_str(trimmed).map_err(|e| ScriptError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let (op, id, version) = apply(service, op).map_err(|source| ScriptError::Op {
            line: line_no,
            source,
        })?;
        steps.push(Step {
            line: line_no,
            op,
            id,
            version,
        });
    }
    Ok(steps)
}
