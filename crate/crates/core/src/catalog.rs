//! Painting catalog: the universe of artworks recommendations are drawn from.
//!
//! Catalogs are read from JSON Lines files, one painting object per line.
//! Required keys are `id`, `title`, `image_uri` and `license`; `artist` and
//! `tags` are optional. Iteration order is file order.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("duplicate painting id {0:?}")]
    DuplicateId(String),
    #[error("schema error on line {line}: {reason}")]
    SchemaError { line: usize, reason: String },
    #[error("painting {0:?} not found")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A single artwork. Pixels are never held here, only where to find them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Painting {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub artist: String,
    pub image_uri: String,
    pub license: String,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

/// Returns true when `id` is nonempty and only uses `[A-Za-z0-9_-]`.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl Painting {
    fn check(&self) -> Result<(), String> {
        if !is_valid_id(&self.id) {
            return Err(format!("invalid id {:?}", self.id));
        }
        if self.image_uri.is_empty() {
            return Err(format!("painting {:?} has an empty image_uri", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    paintings: Vec<Painting>,
    index: HashMap<String, usize>,
    source_label: String,
}

impl Catalog {
    /// Builds a catalog from already-parsed paintings, enforcing the same
    /// invariants as [`load_catalog`]. `SchemaError` lines are 1-based positions.
    pub fn from_paintings(
        source_label: impl Into<String>,
        paintings: Vec<Painting>,
    ) -> Result<Self, CatalogError> {
        let mut index = HashMap::with_capacity(paintings.len());
        for (pos, painting) in paintings.iter().enumerate() {
            painting
                .check()
                .map_err(|reason| CatalogError::SchemaError {
                    line: pos + 1,
                    reason,
                })?;
            if index.insert(painting.id.clone(), pos).is_some() {
                return Err(CatalogError::DuplicateId(painting.id.clone()));
            }
        }
        Ok(Self {
            paintings,
            index,
            source_label: source_label.into(),
        })
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn len(&self) -> usize {
        self.paintings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paintings.is_empty()
    }

    pub fn paintings(&self) -> &[Painting] {
        &self.paintings
    }

    pub fn iter(&self) -> impl Iterator<Item = &Painting> {
        self.paintings.iter()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<&Painting, CatalogError> {
        self.index
            .get(id)
            .map(|&pos| &self.paintings[pos])
            .ok_or_else(|| CatalogError::NotFound(id.to_string()))
    }

    /// Writes the catalog back out as JSON Lines in load order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), CatalogError> {
        for painting in &self.paintings {
            serde_json::to_writer(&mut out, painting).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

pub fn get_painting<'a>(catalog: &'a Catalog, id: &str) -> Result<&'a Painting, CatalogError> {
    catalog.get(id)
}

/// Parses a JSON Lines catalog from any reader. Blank lines are skipped.
pub fn read_catalog<R: BufRead>(
    reader: R,
    source_label: impl Into<String>,
) -> Result<Catalog, CatalogError> {
    let mut paintings = Vec::new();
    let mut index = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let painting: Painting =
            serde_json::from_str(&line).map_err(|e| CatalogError::SchemaError {
                line: line_no,
                reason: e.to_string(),
            })?;
        painting
            .check()
            .map_err(|reason| CatalogError::SchemaError {
                line: line_no,
                reason,
            })?;
        if index.insert(painting.id.clone(), paintings.len()).is_some() {
            return Err(CatalogError::DuplicateId(painting.id));
        }
        paintings.push(painting);
    }
    Ok(Catalog {
        paintings,
        index,
        source_label: source_label.into(),
    })
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_catalog(BufReader::new(file), path.display().to_string())
}
