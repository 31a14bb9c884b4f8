//! Seed-based painting recommendation with a therapist review loop.
//!
//! The flow: load a [`catalog`], ingest one or more [`embeddings`] spaces,
//! rank paintings against a patient's seed with [`recsys`], let a therapist
//! review and finalize picks through [`curation`], deliver them as a guided
//! [`session`] with affect instruments, and summarize outcomes with
//! [`analytics`].

pub mod analytics;
pub mod catalog;
pub mod curation;
pub mod embeddings;
pub mod recsys;
pub mod session;

#[cfg(test)]
mod testutil;
