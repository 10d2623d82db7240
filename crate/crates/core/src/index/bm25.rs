//! Okapi BM25 over an in-memory inverted index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::index_tokens;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub key: String,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    /// Term -> postings sorted by key.
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: BTreeMap<String, u32>,
    pub avgdl: f64,
    pub corpus_size: usize,
    pub k1: f64,
    pub b: f64,
}

pub fn validate_params(k1: f64, b: f64) -> Result<()> {
    if !(k1 > 0.0 && k1.is_finite()) {
        return Err(Error::invalid("k1", format!("must be positive, got {k1}")));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::invalid("b", format!("must lie in [0, 1], got {b}")));
    }
    Ok(())
}

impl Bm25Index {
    /// Indexes `(key, text)` pairs. Keys must be unique.
    pub fn build<'a, I>(docs: I, k1: f64, b: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        validate_params(k1, b)?;
        let mut postings: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (key, text) in docs {
            let tokens = index_tokens(text);
            let length = u32::try_from(tokens.len()).map_err(|_| Error::invalid("text", "segment too long"))?;
            if doc_lengths.insert(key.to_owned(), length).is_some() {
                return Err(Error::invalid("key", format!("duplicate segment key `{key}`")));
            }
            for token in tokens {
                *postings.entry(token).or_default().entry(key.to_owned()).or_default() += 1;
            }
        }
        let corpus_size = doc_lengths.len();
        let total: u64 = doc_lengths.values().map(|&l| u64::from(l)).sum();
        let avgdl = if corpus_size == 0 {
            0.0
        } else {
            total as f64 / corpus_size as f64
        };
        Ok(Self {
            postings: postings
                .into_iter()
                .map(|(term, docs)| {
                    let list = docs.into_iter().map(|(key, tf)| Posting { key, tf }).collect();
                    (term, list)
                })
                .collect(),
            doc_lengths,
            avgdl,
            corpus_size,
            k1,
            b,
        })
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, non-negative for every `n <= N`.
    pub fn idf(&self, doc_freq: usize) -> f64 {
        let n = doc_freq as f64;
        (1.0 + (self.corpus_size as f64 - n + 0.5) / (n + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let f = f64::from(tf);
        let norm = 1.0 - self.b + self.b * f64::from(doc_len) / self.avgdl;
        idf * (f * (self.k1 + 1.0)) / (f + self.k1 * norm)
    }

    /// Score of one segment. Query terms count with multiplicity.
    pub fn score(&self, query: &str, key: &str) -> Result<f64> {
        let &doc_len = self
            .doc_lengths
            .get(key)
            .ok_or_else(|| Error::UnknownKey(key.to_owned()))?;
        let mut score = 0.0;
        for term in index_tokens(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            if let Ok(i) = list.binary_search_by(|p| p.key.as_str().cmp(key)) {
                score += self.term_weight(self.idf(list.len()), list[i].tf, doc_len);
            }
        }
        Ok(score)
    }

    /// Scores of every indexed segment, zero where no query term occurs.
    /// Summation order matches [`Bm25Index::score`], so results are identical.
    pub fn score_all(&self, query: &str) -> BTreeMap<String, f64> {
        let mut scores: BTreeMap<String, f64> =
            self.doc_lengths.keys().map(|k| (k.clone(), 0.0)).collect();
        for term in index_tokens(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for posting in list {
                let doc_len = self.doc_lengths[&posting.key];
                *scores.get_mut(&posting.key).expect("posting key is indexed") +=
                    self.term_weight(idf, posting.tf, doc_len);
            }
        }
        scores
    }
}

pub fn build_bm25_index<'a, I>(docs: I, k1: f64, b: f64) -> Result<Bm25Index>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    Bm25Index::build(docs, k1, b)
}

pub fn bm25_score(index: &Bm25Index, query: &str, key: &str) -> Result<f64> {
    index.score(query, key)
}
