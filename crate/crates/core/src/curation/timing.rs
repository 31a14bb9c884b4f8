//! Per-seed selection time and its summary statistics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMinutes {
    pub seed_id: String,
    pub minutes: f64,
}

/// Minutes an expert spent per seed, with total, mean and population SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub per_seed: Vec<SeedMinutes>,
    pub total: f64,
    pub mean: f64,
    /// Population standard deviation (divisor n).
    pub sd: f64,
}

impl TimingReport {
    /// Returns `None` for an empty input or any negative / non-finite duration.
    pub fn from_minutes<I, S>(per_seed: I) -> Option<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let per_seed: Vec<SeedMinutes> = per_seed
            .into_iter()
            .map(|(seed, minutes)| SeedMinutes {
                seed_id: seed.into(),
                minutes,
            })
            .collect();
        if per_seed.is_empty()
            || per_seed
                .iter()
                .any(|s| !s.minutes.is_finite() || s.minutes < 0.0)
        {
            return None;
        }
        let n = per_seed.len() as f64;
        let total: f64 = per_seed.iter().map(|s| s.minutes).sum();
        let mean = total / n;
        let var = per_seed
            .iter()
            .map(|s| (s.minutes - mean).powi(2))
            .sum::<f64>()
            / n;
        Some(Self {
            per_seed,
            total,
            mean,
            sd: var.sqrt(),
        })
    }
}
