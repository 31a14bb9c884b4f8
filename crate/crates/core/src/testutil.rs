use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Catalog, Painting};
use crate::embeddings::{EmbeddingFile, EmbeddingRecord, EmbeddingSpace, InterchangeHeader};

pub fn painting(id: &str) -> Painting {
    Painting {
        id: id.to_string(),
        title: format!("Painting {id}"),
        artist: String::new(),
        image_uri: format!("img/{id}.jpg"),
        license: "CC-BY".into(),
        tags: Default::default(),
    }
}

pub fn catalog_of<S: AsRef<str>>(ids: &[S]) -> Catalog {
    Catalog::from_paintings("test", ids.iter().map(|s| painting(s.as_ref())).collect()).unwrap()
}

pub fn space_of(space_id: &str, vecs: Vec<(String, Vec<f32>)>) -> EmbeddingSpace {
    let dim = vecs[0].1.len();
    EmbeddingSpace::from_file(
        EmbeddingFile {
            header: InterchangeHeader {
                space: space_id.into(),
                model: "synthetic".into(),
                dim,
                normalized: false,
            },
            records: vecs
                .into_iter()
                .map(|(id, vec)| EmbeddingRecord { id, vec })
                .collect(),
        },
        None,
    )
    .unwrap()
}

/// `m` gaussian-ish vectors with ids `p-000`, `p-001`, ...
pub fn random_vectors(m: usize, dim: usize, seed: u64) -> Vec<(String, Vec<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|i| {
            let v = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            (format!("p-{i:03}"), v)
        })
        .collect()
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap()
}

pub fn mins(m: i64) -> DateTime<Utc> {
    t0() + Duration::minutes(m)
}
