//! Embedding interchange formats.
//!
//! Text form: UTF-8 JSON Lines. Line 1 is a header
//! `{"space": .., "model": .., "dim": .., "normalized": ..}`, every further
//! line is `{"id": .., "vec": [..]}` with exactly `dim` numbers.
//!
//! Binary form (little-endian throughout):
//!
//! ```text
//! b"VAEM" | u32 version (=1) | u32 dim | u32 count
//! count × ( u16 id_len | id bytes (UTF-8) | dim × f32 )
//! ```
//!
//! The binary form carries no space/model metadata, so converting back to
//! text needs a header supplied by the caller. Converting text → binary →
//! text preserves every `f32` bit pattern.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BINARY_MAGIC: &[u8; 4] = b"VAEM";
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InterchangeError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("schema error on line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("dimension mismatch for {id:?}: got {got}, want {want}")]
    DimensionMismatch { id: String, got: usize, want: usize },
    #[error("non-finite component in vector {id:?}")]
    NonFinite { id: String },
    #[error("bad magic bytes, expected VAEM")]
    BadMagic,
    #[error("unsupported binary version {0}")]
    UnsupportedVersion(u32),
    #[error("id {0:?} longer than 65535 bytes")]
    IdTooLong(String),
    #[error("record id is not valid UTF-8")]
    InvalidUtf8,
    #[error("truncated binary input")]
    Truncated,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterchangeHeader {
    pub space: String,
    pub model: String,
    pub dim: usize,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vec: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub header: InterchangeHeader,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingFile {
    /// Validates record dimensions and finiteness against the header.
    pub fn new(
        header: InterchangeHeader,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self, InterchangeError> {
        if header.dim == 0 {
            return Err(InterchangeError::MalformedHeader("dim must be > 0".into()));
        }
        for record in &records {
            check_record(record, header.dim)?;
        }
        Ok(Self { header, records })
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, InterchangeError> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Err(InterchangeError::MalformedHeader("empty input".into())),
                Some((_, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str::<InterchangeHeader>(&line)
                        .map_err(|e| InterchangeError::MalformedHeader(e.to_string()))?;
                }
            }
        };
        if header.dim == 0 {
            return Err(InterchangeError::MalformedHeader("dim must be > 0".into()));
        }
        let mut records = Vec::new();
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord =
                serde_json::from_str(&line).map_err(|e| InterchangeError::Schema {
                    line: n + 1,
                    reason: e.to_string(),
                })?;
            check_record(&record, header.dim)?;
            records.push(record);
        }
        Ok(Self { header, records })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), InterchangeError> {
        serde_json::to_writer(&mut out, &self.header).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        for record in &self.records {
            serde_json::to_writer(&mut out, record).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), InterchangeError> {
        let dim = u32::try_from(self.header.dim)
            .map_err(|_| InterchangeError::MalformedHeader("dim exceeds u32".into()))?;
        let count = u32::try_from(self.records.len())
            .map_err(|_| InterchangeError::MalformedHeader("record count exceeds u32".into()))?;
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        out.write_all(&dim.to_le_bytes())?;
        out.write_all(&count.to_le_bytes())?;
        for record in &self.records {
            let id = record.id.as_bytes();
            let id_len = u16::try_from(id.len())
                .map_err(|_| InterchangeError::IdTooLong(record.id.clone()))?;
            out.write_all(&id_len.to_le_bytes())?;
            out.write_all(id)?;
            for x in &record.vec {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads the binary form. `meta` supplies the space/model/normalized
    /// fields the binary layout does not carry; its `dim` is overwritten.
    pub fn read_binary<R: Read>(
        mut input: R,
        mut meta: InterchangeHeader,
    ) -> Result<Self, InterchangeError> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(InterchangeError::BadMagic);
        }
        let version = read_u32(&mut input)?;
        if version != BINARY_VERSION {
            return Err(InterchangeError::UnsupportedVersion(version));
        }
        let dim = read_u32(&mut input)? as usize;
        if dim == 0 {
            return Err(InterchangeError::MalformedHeader("dim must be > 0".into()));
        }
        let count = read_u32(&mut input)? as usize;
        // count comes from untrusted input, so cap the up-front reservation
        let mut records = Vec::with_capacity(count.min(1 << 16));
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut input, &mut len)?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut input, &mut id)?;
            let id = String::from_utf8(id).map_err(|_| InterchangeError::InvalidUtf8)?;
            read_exact(&mut input, &mut buf)?;
            let vec = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let record = EmbeddingRecord { id, vec };
            check_record(&record, dim)?;
            records.push(record);
        }
        meta.dim = dim;
        Ok(Self {
            header: meta,
            records,
        })
    }

    /// True when `bytes` begins with the binary magic.
    pub fn looks_binary(bytes: &[u8]) -> bool {
        bytes.starts_with(BINARY_MAGIC)
    }
}

fn check_record(record: &EmbeddingRecord, dim: usize) -> Result<(), InterchangeError> {
    if record.vec.len() != dim {
        return Err(InterchangeError::DimensionMismatch {
            id: record.id.clone(),
            got: record.vec.len(),
            want: dim,
        });
    }
    if record.vec.iter().any(|x| !x.is_finite()) {
        return Err(InterchangeError::NonFinite {
            id: record.id.clone(),
        });
    }
    Ok(())
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<(), InterchangeError> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => InterchangeError::Truncated,
        _ => InterchangeError::Io(e),
    })
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, InterchangeError> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(dim: usize) -> InterchangeHeader {
        InterchangeHeader {
            space: "visual".into(),
            model: "test".into(),
            dim,
            normalized: false,
        }
    }

    #[test]
    fn short_record_is_dimension_mismatch() {
        let src = "{\"space\":\"visual\",\"model\":\"m\",\"dim\":4,\"normalized\":false}\n\
                   {\"id\":\"a\",\"vec\":[1,2,3]}\n";
        match EmbeddingFile::read_jsonl(src.as_bytes()) {
            Err(InterchangeError::DimensionMismatch { id, got, want }) => {
                assert_eq!((id.as_str(), got, want), ("a", 3, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_headers() {
        for src in [
            "",
            "{\"space\":\"v\",\"model\":\"m\",\"dim\":0,\"normalized\":false}",
            "{\"space\":\"v\",\"dim\":3,\"normalized\":false}",
            "{\"id\":\"a\",\"vec\":[1]}",
            "[1,2,3]",
        ] {
            assert!(
                matches!(
                    EmbeddingFile::read_jsonl(src.as_bytes()),
                    Err(InterchangeError::MalformedHeader(_))
                ),
                "{src:?}"
            );
        }
    }

    #[test]
    fn overflowing_component_rejected() {
        let src = "{\"space\":\"v\",\"model\":\"m\",\"dim\":1,\"normalized\":false}\n\
                   {\"id\":\"a\",\"vec\":[1e40]}\n";
        assert!(matches!(
            EmbeddingFile::read_jsonl(src.as_bytes()),
            Err(InterchangeError::NonFinite { .. } | InterchangeError::Schema { line: 2, .. })
        ));
    }

    #[test]
    fn binary_layout_is_exact() {
        let file = EmbeddingFile::new(
            header(2),
            vec![EmbeddingRecord {
                id: "ab".into(),
                vec: vec![1.0, -2.5],
            }],
        )
        .unwrap();
        let mut bytes = Vec::new();
        file.write_binary(&mut bytes).unwrap();
        let mut want = b"VAEM".to_vec();
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u16.to_le_bytes());
        want.extend_from_slice(b"ab");
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn binary_errors() {
        assert!(matches!(
            EmbeddingFile::read_binary(&b"NOPE\x01\0\0\0"[..], header(1)),
            Err(InterchangeError::BadMagic)
        ));
        let mut v2 = b"VAEM".to_vec();
        v2.extend_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            EmbeddingFile::read_binary(&v2[..], header(1)),
            Err(InterchangeError::UnsupportedVersion(2))
        ));
        let file = EmbeddingFile::new(
            header(3),
            vec![EmbeddingRecord {
                id: "x".into(),
                vec: vec![1.0, 2.0, 3.0],
            }],
        )
        .unwrap();
        let mut bytes = Vec::new();
        file.write_binary(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(
            EmbeddingFile::read_binary(&bytes[..], header(3)),
            Err(InterchangeError::Truncated)
        ));
    }

    fn finite_f32() -> impl Strategy<Value = f32> {
        any::<u32>()
            .prop_map(f32::from_bits)
            .prop_filter("finite", |x| x.is_finite())
    }

    proptest! {
        #[test]
        fn text_binary_text_preserves_bits(
            vecs in prop::collection::vec(prop::collection::vec(finite_f32(), 5), 1..20)
        ) {
            let records: Vec<_> = vecs
                .into_iter()
                .enumerate()
                .map(|(i, vec)| EmbeddingRecord { id: format!("p-{i}"), vec })
                .collect();
            let original = EmbeddingFile::new(header(5), records).unwrap();

            let mut text = Vec::new();
            original.write_jsonl(&mut text).unwrap();
            let parsed = EmbeddingFile::read_jsonl(&text[..]).unwrap();
            let mut bin = Vec::new();
            parsed.write_binary(&mut bin).unwrap();
            let back = EmbeddingFile::read_binary(&bin[..], header(0)).unwrap();
            let mut text2 = Vec::new();
            back.write_jsonl(&mut text2).unwrap();

            prop_assert_eq!(&text, &text2);
            for (a, b) in original.records.iter().zip(&back.records) {
                prop_assert_eq!(&a.id, &b.id);
                let abits: Vec<u32> = a.vec.iter().map(|x| x.to_bits()).collect();
                let bbits: Vec<u32> = b.vec.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(abits, bbits);
            }
        }
    }
}
