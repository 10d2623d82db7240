//! Retrieval substrates built over augmented segments: a unit-normalized
//! vector index, a BM25 inverted index and the critical keyword table.
//! Both the vector and lexical routes index `embedding_text`.

mod bm25;
mod embed;
mod keywords;
mod persist;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, Segment};
use crate::error::{Error, Result, Warning};

pub use bm25::{bm25_score, build_bm25_index, validate_params, Bm25Index, Posting, DEFAULT_B, DEFAULT_K1};
pub use embed::{cosine, embed_default, is_unembeddable, l2_norm, unit, Embedder, HashingEmbedder, DEFAULT_DIM};
pub use keywords::{extract_keywords, KeywordExtractor, KeywordTable, PartNumberExtractor};
pub use persist::{load_index, save_index, FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorIndex {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<f32>>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Embeds each segment's text; unembeddable ones are skipped with a warning.
pub fn build_vector_index<'a, I>(segments: I, embedder: &dyn Embedder) -> Result<(VectorIndex, Vec<Warning>)>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let dim = embedder.dim();
    let mut index = VectorIndex {
        dim,
        entries: BTreeMap::new(),
    };
    let mut warnings = Vec::new();
    for (key, text) in segments {
        let vector = if text.trim().is_empty() {
            vec![0.0; dim]
        } else {
            embedder.embed(text)?
        };
        if vector.len() != dim {
            return Err(Error::DimensionMismatch {
                index: dim,
                embedder: vector.len(),
            });
        }
        if is_unembeddable(&vector) {
            warnings.push(Warning::new(key, "segment has no embeddable text; skipped"));
            continue;
        }
        index.entries.insert(key.to_owned(), unit(vector));
    }
    Ok((index, warnings))
}

/// A segment together with its global key and owning document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub key: String,
    pub doc_id: String,
    pub doc_title: String,
    #[serde(flatten)]
    pub segment: Segment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexParams {
    pub k1: f64,
    pub b: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

/// Everything a query needs, persisted together.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    pub embedder: String,
    pub segments: Vec<SegmentRecord>,
    pub vector: VectorIndex,
    pub bm25: Bm25Index,
    pub keywords: KeywordTable,
    /// User keyword dictionary applied at build time; reused for queries.
    pub dictionary: BTreeSet<String>,
}

impl IndexSet {
    pub fn segment(&self, key: &str) -> Option<&SegmentRecord> {
        self.segments
            .binary_search_by(|s| s.key.as_str().cmp(key))
            .ok()
            .map(|i| &self.segments[i])
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.key.as_str())
    }

    /// Checks that every component covers the same key universe; the vector
    /// index may omit unembeddable segments but must not add unknown ones.
    pub fn check_consistency(&self) -> Result<()> {
        let universe: BTreeSet<&str> = self.keys().collect();
        let lexical: BTreeSet<&str> = self.bm25.doc_lengths.keys().map(String::as_str).collect();
        let keyword: BTreeSet<&str> = self.keywords.keywords.keys().map(String::as_str).collect();
        let mut missing: BTreeSet<String> = BTreeSet::new();
        for set in [&lexical, &keyword] {
            missing.extend(universe.symmetric_difference(set).map(|k| (*k).to_owned()));
        }
        missing.extend(
            self.vector
                .entries
                .keys()
                .filter(|k| !universe.contains(k.as_str()))
                .cloned(),
        );
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::InconsistentIndex {
                missing: missing.into_iter().collect(),
            })
        }
    }
}

/// Flattens augmented documents into key-sorted segment records.
pub fn segment_records(docs: &[DocumentRecord]) -> Result<Vec<SegmentRecord>> {
    let mut records: Vec<SegmentRecord> = docs
        .iter()
        .flat_map(|doc| {
            doc.segments.iter().map(move |s| SegmentRecord {
                key: doc.key_of(s),
                doc_id: doc.doc_id.clone(),
                doc_title: doc.title.clone(),
                segment: s.clone(),
            })
        })
        .collect();
    records.sort_by(|a, b| a.key.cmp(&b.key));
    if let Some(pair) = records.windows(2).find(|w| w[0].key == w[1].key) {
        return Err(Error::invalid("segments", format!("duplicate segment key `{}`", pair[0].key)));
    }
    Ok(records)
}

pub fn build_indices(
    docs: &[DocumentRecord],
    embedder: &dyn Embedder,
    extractor: &dyn KeywordExtractor,
    dictionary: &BTreeSet<String>,
    params: IndexParams,
) -> Result<(IndexSet, Vec<Warning>)> {
    let segments = segment_records(docs)?;
    let texts = || segments.iter().map(|s| (s.key.as_str(), s.segment.embedding_text.as_str()));
    let (vector, warnings) = build_vector_index(texts(), embedder)?;
    let bm25 = Bm25Index::build(texts(), params.k1, params.b)?;
    let keywords = KeywordTable::build(texts(), extractor, dictionary)?;
    let dictionary = dictionary.iter().map(|k| k.trim().to_lowercase()).filter(|k| !k.is_empty()).collect();
    Ok((
        IndexSet {
            embedder: embedder.name(),
            segments,
            vector,
            bm25,
            keywords,
            dictionary,
        },
        warnings,
    ))
}
