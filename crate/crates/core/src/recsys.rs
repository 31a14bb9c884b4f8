//! Seed-based scoring and ranked top-r lists.
//!
//! A patient picks one seed painting; every other painting is scored by its
//! cosine similarity to the seed and the `r` best form the recommendation
//! list. Ties are broken by ascending painting id so lists are identical
//! across runs and platforms.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingSpace;

pub const DEFAULT_R: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecsysError {
    #[error("unknown painting {0:?}")]
    UnknownPainting(String),
    #[error("r must be at least 1")]
    ZeroR,
}

impl RecsysError {
    pub fn code(&self) -> &'static str {
        match self {
            RecsysError::UnknownPainting(_) => "UnknownPainting",
            RecsysError::ZeroR => "ZeroR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub painting_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub seed_id: String,
    pub space_id: String,
    pub entries: Vec<RankedEntry>,
    pub r: usize,
    pub excluded: BTreeSet<String>,
    pub generated_at: DateTime<Utc>,
}

impl RecommendationList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.painting_id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|e| e.painting_id == id)
    }

    pub fn head(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }
}

/// Descending score, then ascending id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Similarity of every painting in the space to the seed, seed included.
pub fn score_user(
    space: &EmbeddingSpace,
    seed_id: &str,
) -> Result<BTreeMap<String, f64>, RecsysError> {
    let seed = space
        .position(seed_id)
        .ok_or_else(|| RecsysError::UnknownPainting(seed_id.to_string()))?;
    Ok(space
        .ids()
        .iter()
        .cloned()
        .zip(space.scores_from(seed))
        .collect())
}

pub fn top_r(
    space: &EmbeddingSpace,
    seed_id: &str,
    r: usize,
    excluded: &BTreeSet<String>,
) -> Result<RecommendationList, RecsysError> {
    top_r_at(space, seed_id, r, excluded, Utc::now())
}

/// [`top_r`] with an explicit generation timestamp.
pub fn top_r_at(
    space: &EmbeddingSpace,
    seed_id: &str,
    r: usize,
    excluded: &BTreeSet<String>,
    generated_at: DateTime<Utc>,
) -> Result<RecommendationList, RecsysError> {
    if r == 0 {
        return Err(RecsysError::ZeroR);
    }
    let seed = space
        .position(seed_id)
        .ok_or_else(|| RecsysError::UnknownPainting(seed_id.to_string()))?;

    let ids = space.ids();
    let mut candidates: Vec<(usize, f64)> = (0..space.len())
        .filter(|&j| j != seed && !excluded.contains(&ids[j]))
        .map(|j| (j, space.similarity_at(j, seed)))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| {
        rank_order((ids[a.0].as_str(), a.1), (ids[b.0].as_str(), b.1))
    };
    // partial selection: after this the first r candidates are the r best in
    // some order, so only they need sorting
    if candidates.len() > r {
        candidates.select_nth_unstable_by(r - 1, cmp);
        candidates.truncate(r);
    }
    candidates.sort_unstable_by(cmp);

    Ok(RecommendationList {
        seed_id: seed_id.to_string(),
        space_id: space.space_id().to_string(),
        entries: candidates
            .into_iter()
            .map(|(j, score)| RankedEntry {
                painting_id: ids[j].clone(),
                score,
            })
            .collect(),
        r,
        excluded: excluded.clone(),
        generated_at,
    })
}

/// Recomputes `previous` with `more_excluded` added to its exclusion set.
/// Exclusions accumulate, so nothing excluded earlier can come back.
pub fn regenerate(
    space: &EmbeddingSpace,
    previous: &RecommendationList,
    more_excluded: &BTreeSet<String>,
) -> Result<RecommendationList, RecsysError> {
    regenerate_at(space, previous, more_excluded, Utc::now())
}

pub fn regenerate_at(
    space: &EmbeddingSpace,
    previous: &RecommendationList,
    more_excluded: &BTreeSet<String>,
    generated_at: DateTime<Utc>,
) -> Result<RecommendationList, RecsysError> {
    let excluded: BTreeSet<String> = previous.excluded.union(more_excluded).cloned().collect();
    top_r_at(
        space,
        &previous.seed_id,
        previous.r,
        &excluded,
        generated_at,
    )
}
