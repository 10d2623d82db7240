//! On-disk index layout.
//!
//! ```text
//! <dir>/manifest.json   format version, embedder, dim, BM25 parameters, vector keys
//! <dir>/vectors.bin     b"HIQA1" then little-endian f32 components, one vector per key
//! <dir>/postings.json   BM25 postings, document lengths, avgdl
//! <dir>/keywords.json   keyword dictionary and per-segment keyword sets
//! <dir>/segments.json   segment records (content, metadata path, embedding text)
//! ```
//!
//! All maps are ordered, so saving the same index twice yields identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bm25Index, IndexSet, KeywordTable, SegmentRecord, VectorIndex};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"HIQA1";
pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const VECTORS: &str = "vectors.bin";
const POSTINGS: &str = "postings.json";
const KEYWORDS: &str = "keywords.json";
const SEGMENTS: &str = "segments.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    magic: String,
    embedder: String,
    dim: usize,
    k1: f64,
    b: f64,
    segment_count: usize,
    vector_keys: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct KeywordFile {
    dictionary: BTreeSet<String>,
    keywords: BTreeMap<String, BTreeSet<String>>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_owned(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_file(path)?).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

/// Writes the index under `dir`, creating it if needed.
pub fn save_index(index: &IndexSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.to_owned(),
        source,
    })?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        magic: String::from_utf8_lossy(MAGIC).into_owned(),
        embedder: index.embedder.clone(),
        dim: index.vector.dim,
        k1: index.bm25.k1,
        b: index.bm25.b,
        segment_count: index.segments.len(),
        vector_keys: index.vector.entries.keys().cloned().collect(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;

    let mut blob = Vec::with_capacity(MAGIC.len() + 4 * index.vector.dim * index.vector.len());
    blob.extend_from_slice(MAGIC);
    for vector in index.vector.entries.values() {
        for x in vector {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_file(&dir.join(VECTORS), &blob)?;

    write_json(&dir.join(POSTINGS), &index.bm25)?;
    write_json(
        &dir.join(KEYWORDS),
        &KeywordFile {
            dictionary: index.dictionary.clone(),
            keywords: index.keywords.keywords.clone(),
        },
    )?;
    write_json(&dir.join(SEGMENTS), &index.segments)
}

pub fn load_index(dir: &Path) -> Result<IndexSet> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if manifest.format_version != FORMAT_VERSION || manifest.magic.as_bytes() != MAGIC {
        return Err(Error::IndexFormat(format!(
            "unsupported index format `{}` version {} (expected `{}` version {FORMAT_VERSION})",
            manifest.magic,
            manifest.format_version,
            String::from_utf8_lossy(MAGIC),
        )));
    }

    let blob = read_file(&dir.join(VECTORS))?;
    if blob.len() < MAGIC.len() || &blob[..MAGIC.len()] != MAGIC {
        return Err(Error::IndexFormat(format!("{VECTORS}: bad magic")));
    }
    let body = &blob[MAGIC.len()..];
    let expected = 4 * manifest.dim * manifest.vector_keys.len();
    if body.len() != expected {
        return Err(Error::IndexFormat(format!(
            "{VECTORS}: expected {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let mut entries = BTreeMap::new();
    if manifest.dim > 0 {
        for (key, chunk) in manifest.vector_keys.iter().zip(body.chunks_exact(4 * manifest.dim)) {
            let vector = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if entries.insert(key.clone(), vector).is_some() {
                return Err(Error::IndexFormat(format!("duplicate vector key `{key}`")));
            }
        }
    }

    let bm25: Bm25Index = read_json(&dir.join(POSTINGS))?;
    if bm25.k1.to_bits() != manifest.k1.to_bits() || bm25.b.to_bits() != manifest.b.to_bits() {
        return Err(Error::IndexFormat("BM25 parameters disagree with the manifest".into()));
    }
    let keywords: KeywordFile = read_json(&dir.join(KEYWORDS))?;
    let segments: Vec<SegmentRecord> = read_json(&dir.join(SEGMENTS))?;
    if segments.len() != manifest.segment_count {
        return Err(Error::IndexFormat(format!(
            "manifest lists {} segments, {SEGMENTS} has {}",
            manifest.segment_count,
            segments.len()
        )));
    }

    let index = IndexSet {
        embedder: manifest.embedder,
        segments,
        vector: VectorIndex {
            dim: manifest.dim,
            entries,
        },
        bm25,
        keywords: KeywordTable {
            keywords: keywords.keywords,
        },
        dictionary: keywords.dictionary,
    };
    index.check_consistency()?;
    Ok(index)
}
