//! Per-painting latent vectors and the cosine similarity kernel.
//!
//! Vectors are stored as `f32` and L2-normalized once at ingestion, so a
//! similarity query is a dot product. All reductions accumulate in `f64`.

pub mod interchange;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
pub use interchange::{EmbeddingFile, EmbeddingRecord, InterchangeError, InterchangeHeader};

/// Largest space for which [`SimilarityMatrix::build`] materializes all pairs by default.
pub const DEFAULT_MATRIX_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch for {id:?}: got {got}, want {want}")]
    DimensionMismatch { id: String, got: usize, want: usize },
    #[error("unknown painting {0:?}")]
    UnknownPainting(String),
    #[error("painting {0:?} appears more than once")]
    DuplicateRecord(String),
    #[error("space has {m} paintings, above the matrix limit of {limit}")]
    MatrixTooLarge { m: usize, limit: usize },
    #[error(transparent)]
    Interchange(InterchangeError),
}

impl From<InterchangeError> for EmbeddingError {
    fn from(e: InterchangeError) -> Self {
        match e {
            InterchangeError::DimensionMismatch { id, got, want } => {
                EmbeddingError::DimensionMismatch { id, got, want }
            }
            other => EmbeddingError::Interchange(other),
        }
    }
}

impl From<std::io::Error> for EmbeddingError {
    fn from(e: std::io::Error) -> Self {
        EmbeddingError::Interchange(InterchangeError::Io(e))
    }
}

/// Length mismatch between the two operands of [`cosine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

/// Non-fatal findings from ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum IngestWarning {
    /// The vector had zero norm; it is kept as all zeros and scores 0.0 against everything.
    ZeroVector(String),
}

fn dot_f64(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .fold(0.0f64, |acc, (&a, &b)| acc + f64::from(a) * f64::from(b))
}

fn norm_f64(u: &[f32]) -> f64 {
    dot_f64(u, u).sqrt()
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`, or 0.0 when either norm is zero.
///
/// The dot product and both squared norms are summed in `f64` from index 0
/// upwards. Each term `u[k]*v[k]` is commutative in IEEE arithmetic and the
/// norms enter as a product, so `cosine(u, v)` and `cosine(v, u)` are
/// bitwise identical. The result is clamped to `[-1, 1]`.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, DimensionMismatch> {
    if u.len() != v.len() {
        return Err(DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let denom = norm_f64(u) * norm_f64(v);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot_f64(u, v) / denom).clamp(-1.0, 1.0))
}

/// One backbone's embeddings for (a subset of) the catalog.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    space_id: String,
    model_name: String,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    zero: Vec<bool>,
    warnings: Vec<IngestWarning>,
}

impl EmbeddingSpace {
    /// Normalizes and indexes `file`. When a catalog is given every record id
    /// must belong to it.
    pub fn from_file(
        file: EmbeddingFile,
        catalog: Option<&Catalog>,
    ) -> Result<Self, EmbeddingError> {
        let EmbeddingFile { header, records } = file;
        let dim = header.dim;
        if dim == 0 {
            return Err(InterchangeError::MalformedHeader("dim must be > 0".into()).into());
        }
        let mut space = Self {
            space_id: header.space,
            model_name: header.model,
            dim,
            ids: Vec::with_capacity(records.len()),
            index: HashMap::with_capacity(records.len()),
            data: Vec::with_capacity(records.len() * dim),
            zero: Vec::with_capacity(records.len()),
            warnings: Vec::new(),
        };
        for record in records {
            if record.vec.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    id: record.id,
                    got: record.vec.len(),
                    want: dim,
                });
            }
            if let Some(catalog) = catalog {
                if !catalog.contains(&record.id) {
                    return Err(EmbeddingError::UnknownPainting(record.id));
                }
            }
            if space.index.contains_key(&record.id) {
                return Err(EmbeddingError::DuplicateRecord(record.id));
            }
            let norm = norm_f64(&record.vec);
            let is_zero = norm == 0.0;
            if is_zero {
                space.data.extend(std::iter::repeat_n(0.0f32, dim));
                space
                    .warnings
                    .push(IngestWarning::ZeroVector(record.id.clone()));
            } else {
                space
                    .data
                    .extend(record.vec.iter().map(|&x| (f64::from(x) / norm) as f32));
            }
            space.zero.push(is_zero);
            space.index.insert(record.id.clone(), space.ids.len());
            space.ids.push(record.id);
        }
        Ok(space)
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Always true for spaces built by this module.
    pub fn normalized(&self) -> bool {
        true
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Painting ids in ingestion order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn warnings(&self) -> &[IngestWarning] {
        &self.warnings
    }

    pub fn zero_vectors(&self) -> impl Iterator<Item = &str> {
        self.ids
            .iter()
            .zip(&self.zero)
            .filter(|(_, &z)| z)
            .map(|(id, _)| id.as_str())
    }

    pub fn is_zero(&self, id: &str) -> bool {
        self.position(id).is_some_and(|i| self.zero[i])
    }

    /// The stored (normalized) vector.
    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Similarity between positions `i` and `j`; 0.0 if either vector is zero.
    pub fn similarity_at(&self, i: usize, j: usize) -> f64 {
        if self.zero[i] || self.zero[j] {
            return 0.0;
        }
        dot_f64(self.row(i), self.row(j)).clamp(-1.0, 1.0)
    }

    /// Scores of every painting against the one at `seed`, in ingestion order.
    pub fn scores_from(&self, seed: usize) -> Vec<f64> {
        (0..self.len())
            .map(|j| self.similarity_at(j, seed))
            .collect()
    }

    pub fn header(&self) -> InterchangeHeader {
        InterchangeHeader {
            space: self.space_id.clone(),
            model: self.model_name.clone(),
            dim: self.dim,
            normalized: true,
        }
    }

    /// The normalized vectors in interchange form.
    pub fn to_file(&self) -> EmbeddingFile {
        EmbeddingFile {
            header: self.header(),
            records: self
                .ids
                .iter()
                .enumerate()
                .map(|(i, id)| EmbeddingRecord {
                    id: id.clone(),
                    vec: self.row(i).to_vec(),
                })
                .collect(),
        }
    }
}

/// Reads a JSON Lines interchange file and binds it to `catalog`.
pub fn ingest_embeddings(
    catalog: &Catalog,
    path: impl AsRef<Path>,
) -> Result<EmbeddingSpace, EmbeddingError> {
    let file = File::open(path)?;
    let parsed = EmbeddingFile::read_jsonl(BufReader::new(file))?;
    EmbeddingSpace::from_file(parsed, Some(catalog))
}

/// One row of the similarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityRow {
    pub seed_id: String,
    pub scores: BTreeMap<String, f64>,
}

pub fn similarity_row(
    space: &EmbeddingSpace,
    seed_id: &str,
) -> Result<SimilarityRow, EmbeddingError> {
    let seed = space
        .position(seed_id)
        .ok_or_else(|| EmbeddingError::UnknownPainting(seed_id.to_string()))?;
    let scores = space
        .ids()
        .iter()
        .cloned()
        .zip(space.scores_from(seed))
        .collect();
    Ok(SimilarityRow {
        seed_id: seed_id.to_string(),
        scores,
    })
}

/// Dense all-pairs similarity, only built for spaces up to a size limit.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn build(space: &EmbeddingSpace, limit: usize) -> Result<Self, EmbeddingError> {
        let m = space.len();
        if m > limit {
            return Err(EmbeddingError::MatrixTooLarge { m, limit });
        }
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let s = space.similarity_at(i, j);
                values[i * m + j] = s;
                values[j * m + i] = s;
            }
        }
        Ok(Self {
            ids: space.ids().to_vec(),
            values,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }
}

/// Ids present in `catalog` but missing from `space`.
pub fn uncovered<'a>(catalog: &'a Catalog, space: &EmbeddingSpace) -> BTreeSet<&'a str> {
    catalog
        .iter()
        .map(|p| p.id.as_str())
        .filter(|id| !space.contains(id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Painting;
    use proptest::prelude::*;

    fn file(dim: usize, vecs: &[(&str, Vec<f32>)]) -> EmbeddingFile {
        EmbeddingFile {
            header: InterchangeHeader {
                space: "visual".into(),
                model: "test".into(),
                dim,
                normalized: false,
            },
            records: vecs
                .iter()
                .map(|(id, v)| EmbeddingRecord {
                    id: id.to_string(),
                    vec: v.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let diag = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((diag - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!((diag - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(DimensionMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn zero_vector_flagged_and_scores_zero() {
        let space = EmbeddingSpace::from_file(
            file(2, &[("a", vec![0.0, 0.0]), ("b", vec![3.0, 4.0])]),
            None,
        )
        .unwrap();
        assert_eq!(space.warnings(), &[IngestWarning::ZeroVector("a".into())]);
        assert!(space.is_zero("a"));
        assert_eq!(space.vector("a").unwrap(), &[0.0, 0.0]);
        let row = similarity_row(&space, "a").unwrap();
        assert_eq!(row.scores["a"], 0.0);
        assert_eq!(row.scores["b"], 0.0);
    }

    #[test]
    fn normalizes_on_ingest() {
        let space = EmbeddingSpace::from_file(file(2, &[("b", vec![3.0, 4.0])]), None).unwrap();
        assert_eq!(space.vector("b").unwrap(), &[0.6, 0.8]);
        assert!(space.normalized());
    }

    #[test]
    fn unknown_and_duplicate_records() {
        let catalog = Catalog::from_paintings(
            "t",
            vec![Painting {
                id: "a".into(),
                title: "A".into(),
                artist: String::new(),
                image_uri: "a.jpg".into(),
                license: "CC0".into(),
                tags: Default::default(),
            }],
        )
        .unwrap();
        let err = EmbeddingSpace::from_file(
            file(1, &[("a", vec![1.0]), ("zz", vec![1.0])]),
            Some(&catalog),
        )
        .unwrap_err();
        assert!(matches!(err, EmbeddingError::UnknownPainting(id) if id == "zz"));
        let err = EmbeddingSpace::from_file(file(1, &[("a", vec![1.0]), ("a", vec![2.0])]), None)
            .unwrap_err();
        assert!(matches!(err, EmbeddingError::DuplicateRecord(id) if id == "a"));
    }

    #[test]
    fn row_for_unknown_seed() {
        let space = EmbeddingSpace::from_file(file(1, &[("a", vec![1.0])]), None).unwrap();
        assert!(matches!(
            similarity_row(&space, "absent"),
            Err(EmbeddingError::UnknownPainting(_))
        ));
    }

    #[test]
    fn matrix_limit_enforced() {
        let space = EmbeddingSpace::from_file(file(1, &[("a", vec![1.0]), ("b", vec![2.0])]), None)
            .unwrap();
        assert!(matches!(
            SimilarityMatrix::build(&space, 1),
            Err(EmbeddingError::MatrixTooLarge { m: 2, limit: 1 })
        ));
        let m = SimilarityMatrix::build(&space, DEFAULT_MATRIX_LIMIT).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-6);
    }

    fn small_vec() -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-100.0f32..100.0, 6)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(u in small_vec(), v in small_vec()) {
            let a = cosine(&u, &v).unwrap();
            let b = cosine(&v, &u).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&a));
        }

        #[test]
        fn scale_invariant_after_normalization(u in small_vec(), v in small_vec(), s in 0.001f32..1000.0) {
            let scaled: Vec<f32> = u.iter().map(|x| x * s).collect();
            let plain = EmbeddingSpace::from_file(file(6, &[("u", u.clone()), ("v", v.clone())]), None).unwrap();
            let big = EmbeddingSpace::from_file(file(6, &[("u", scaled), ("v", v)]), None).unwrap();
            prop_assert!((plain.similarity_at(0, 1) - big.similarity_at(0, 1)).abs() < 1e-6);
        }
    }
}
