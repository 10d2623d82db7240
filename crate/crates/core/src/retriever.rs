//! Multi-route retrieval: vector similarity, BM25 and critical keyword hits,
//! fused into one score per segment and a full deterministic ranking.
//!
//! ```text
//! score = alpha * score_v + (1 - alpha) * score_r + beta * ln(1 + |C|)
//! ```
//!
//! `score_v` and `score_r` are min-max normalized per query over the key set
//! of their route; `|C|` counts distinct keywords shared by query and segment.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::index::{
    cosine, extract_keywords, is_unembeddable, Embedder, IndexSet, KeywordExtractor, KeywordTable, VectorIndex,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Weight of the vector route against BM25, in `[0, 1]`.
    pub alpha: f64,
    /// Weight of the keyword bonus, `>= 0`.
    pub beta: f64,
    pub top_k: usize,
    /// Log-rank index shape parameter, `> 0`.
    pub gamma: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.1,
            top_k: 5,
            gamma: 1.0,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if self.top_k == 0 {
            return Err(Error::invalid("top_k", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub segment_key: String,
    /// Normalized vector score.
    pub score_v: f64,
    /// Normalized BM25 score.
    pub score_r: f64,
    pub keyword_hits: usize,
    pub fused_score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Raw cosine similarity of the query against every vector entry.
pub fn vector_route(query: &str, index: &VectorIndex, embedder: &dyn Embedder) -> Result<BTreeMap<String, f64>> {
    if embedder.dim() != index.dim {
        return Err(Error::DimensionMismatch {
            index: index.dim,
            embedder: embedder.dim(),
        });
    }
    let q = embedder.embed(query)?;
    if q.len() != index.dim {
        return Err(Error::DimensionMismatch {
            index: index.dim,
            embedder: q.len(),
        });
    }
    Ok(cosine_all(&q, index))
}

fn cosine_all(query: &[f32], index: &VectorIndex) -> BTreeMap<String, f64> {
    index
        .entries
        .iter()
        .map(|(key, v)| (key.clone(), cosine(query, v)))
        .collect()
}

/// Query keywords: extractor output, dictionary terms found in the query,
/// and any per-query user keywords.
pub fn query_keywords(
    query: &str,
    extractor: &dyn KeywordExtractor,
    dictionary: &BTreeSet<String>,
    user_keywords: &BTreeSet<String>,
) -> Result<BTreeSet<String>> {
    let mut keywords = extract_keywords(query, extractor, dictionary)?;
    keywords.extend(
        user_keywords
            .iter()
            .map(|k| k.trim().to_lowercase())
            .filter(|k| !k.is_empty()),
    );
    Ok(keywords)
}

/// `|C|` per segment: distinct query keywords present in its keyword set.
pub fn keyword_route(table: &KeywordTable, query_keywords: &BTreeSet<String>) -> BTreeMap<String, usize> {
    table
        .keywords
        .iter()
        .map(|(key, set)| (key.clone(), set.intersection(query_keywords).count()))
        .collect()
}

/// Min-max normalization to `[0, 1]`; a constant map becomes uniformly 0.5.
pub fn normalize_scores(raw: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let (min, max) = raw
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = max - min;
    raw.iter()
        .map(|(k, &x)| {
            let y = if span > 0.0 { (x - min) / span } else { 0.5 };
            (k.clone(), y)
        })
        .collect()
}

pub fn fused_score(alpha: f64, beta: f64, score_v: f64, score_r: f64, hits: usize) -> f64 {
    alpha * score_v + (1.0 - alpha) * score_r + beta * (hits as f64).ln_1p()
}

fn rank_order(a: &RankedResult, b: &RankedResult) -> Ordering {
    b.fused_score
        .total_cmp(&a.fused_score)
        .then_with(|| b.score_v.total_cmp(&a.score_v))
        .then_with(|| a.segment_key.cmp(&b.segment_key))
}

/// Fuses normalized route scores over the union of their keys (absent
/// entries read as zero) and ranks every key.
pub fn fuse_and_rank(
    scores_v: &BTreeMap<String, f64>,
    scores_r: &BTreeMap<String, f64>,
    hits: &BTreeMap<String, usize>,
    config: &RetrievalConfig,
) -> Result<Vec<RankedResult>> {
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {}", config.alpha)));
    }
    let universe: BTreeSet<&String> = scores_v.keys().chain(scores_r.keys()).chain(hits.keys()).collect();
    let mut ranking: Vec<RankedResult> = universe
        .into_iter()
        .map(|key| {
            let score_v = scores_v.get(key).copied().unwrap_or(0.0);
            let score_r = scores_r.get(key).copied().unwrap_or(0.0);
            let keyword_hits = hits.get(key).copied().unwrap_or(0);
            RankedResult {
                segment_key: key.clone(),
                score_v,
                score_r,
                keyword_hits,
                fused_score: fused_score(config.alpha, config.beta, score_v, score_r, keyword_hits),
                rank: 0,
            }
        })
        .collect();
    ranking.sort_by(rank_order);
    for (i, r) in ranking.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(ranking)
}

/// Full ranking of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub ranking: Vec<RankedResult>,
    pub query_keywords: BTreeSet<String>,
    pub warnings: Vec<Warning>,
}

impl Retrieval {
    pub fn top_k(&self, k: usize) -> &[RankedResult] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    pub fn rank_of(&self, key: &str) -> Option<usize> {
        self.ranking.iter().find(|r| r.segment_key == key).map(|r| r.rank)
    }
}

/// Executes the three routes over a loaded index.
pub struct Retriever<'a> {
    index: &'a IndexSet,
    embedder: &'a dyn Embedder,
    extractor: &'a dyn KeywordExtractor,
}

impl<'a> Retriever<'a> {
    pub fn new(index: &'a IndexSet, embedder: &'a dyn Embedder, extractor: &'a dyn KeywordExtractor) -> Result<Self> {
        index.check_consistency()?;
        if embedder.dim() != index.vector.dim {
            return Err(Error::DimensionMismatch {
                index: index.vector.dim,
                embedder: embedder.dim(),
            });
        }
        Ok(Self {
            index,
            embedder,
            extractor,
        })
    }

    pub fn index(&self) -> &IndexSet {
        self.index
    }

    pub fn retrieve(&self, query: &str, user_keywords: &BTreeSet<String>, config: &RetrievalConfig) -> Result<Retrieval> {
        config.validate()?;
        let mut warnings = Vec::new();

        let q = self.embedder.embed(query)?;
        if q.len() != self.index.vector.dim {
            return Err(Error::DimensionMismatch {
                index: self.index.vector.dim,
                embedder: q.len(),
            });
        }
        if is_unembeddable(&q) {
            warnings.push(Warning::new("query", "query has no embeddable tokens; vector scores are zero"));
        }
        // The zero query vector scores zero against every entry.
        let raw_v = cosine_all(&q, &self.index.vector);
        let raw_r = self.index.bm25.score_all(query);
        let keywords = query_keywords(query, self.extractor, &self.index.dictionary, user_keywords)?;
        let hits = keyword_route(&self.index.keywords, &keywords);

        let ranking = fuse_and_rank(&normalize_scores(&raw_v), &normalize_scores(&raw_r), &hits, config)?;
        Ok(Retrieval {
            ranking,
            query_keywords: keywords,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{HashingEmbedder, PartNumberExtractor};

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect()
    }

    #[test]
    fn min_max() {
        let n = normalize_scores(&map(&[("a", 2.0), ("b", 4.0), ("c", 6.0)]));
        assert_eq!(n, map(&[("a", 0.0), ("b", 0.5), ("c", 1.0)]));
        assert_eq!(normalize_scores(&map(&[("a", 7.0), ("b", 7.0)])), map(&[("a", 0.5), ("b", 0.5)]));
        assert_eq!(normalize_scores(&map(&[("a", 3.0)])), map(&[("a", 0.5)]));
        assert!(normalize_scores(&BTreeMap::new()).is_empty());
    }

    #[test]
    fn worked_fusion() {
        let cfg = RetrievalConfig {
            alpha: 0.5,
            beta: 0.2,
            ..RetrievalConfig::default()
        };
        let ranking = fuse_and_rank(
            &map(&[("s", 0.8)]),
            &map(&[("s", 0.6)]),
            &BTreeMap::from([("s".to_owned(), 3)]),
            &cfg,
        )
        .unwrap();
        assert!((ranking[0].fused_score - 0.97726).abs() < 1e-5);
        assert!((ranking[0].fused_score - (0.4 + 0.3 + 0.2 * 4f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn zero_hits_add_nothing() {
        assert_eq!(fused_score(0.3, 5.0, 0.2, 0.9, 0), 0.3 * 0.2 + 0.7 * 0.9);
    }

    #[test]
    fn alpha_out_of_range() {
        let cfg = RetrievalConfig {
            alpha: 1.5,
            ..RetrievalConfig::default()
        };
        assert!(fuse_and_rank(&BTreeMap::new(), &BTreeMap::new(), &BTreeMap::new(), &cfg).is_err());
    }

    #[test]
    fn ties_break_on_vector_then_key() {
        let cfg = RetrievalConfig {
            alpha: 0.5,
            beta: 0.0,
            ..RetrievalConfig::default()
        };
        let ranking = fuse_and_rank(
            &map(&[("b", 0.6), ("a", 0.4), ("c", 0.6)]),
            &map(&[("b", 0.4), ("a", 0.6), ("c", 0.4)]),
            &BTreeMap::new(),
            &cfg,
        )
        .unwrap();
        let order: Vec<_> = ranking.iter().map(|r| (r.segment_key.as_str(), r.rank)).collect();
        assert_eq!(order, vec![("b", 1), ("c", 2), ("a", 3)]);
    }

    #[test]
    fn keyword_intersection() {
        let table = KeywordTable {
            keywords: BTreeMap::from([
                ("x".to_owned(), BTreeSet::from(["ca-is3641".to_owned(), "5v".to_owned()])),
                ("y".to_owned(), BTreeSet::new()),
            ]),
        };
        let one = keyword_route(&table, &BTreeSet::from(["ca-is3641".to_owned()]));
        assert_eq!(one["x"], 1);
        assert_eq!(one["y"], 0);
        let two = keyword_route(&table, &BTreeSet::from(["ca-is3641".to_owned(), "5v".to_owned()]));
        assert_eq!(two["x"], 2);
    }

    #[test]
    fn vector_route_cases() {
        let embedder = HashingEmbedder::default();
        let (index, _) =
            crate::index::build_vector_index([("a", "supply voltage range"), ("b", "thermal pad")], &embedder).unwrap();
        let scores = vector_route("supply voltage range", &index, &embedder).unwrap();
        assert!((scores["a"] - 1.0).abs() < 1e-6);

        let empty = VectorIndex {
            dim: embedder.dim(),
            entries: BTreeMap::new(),
        };
        assert!(vector_route("x", &empty, &embedder).unwrap().is_empty());
        assert!(matches!(
            vector_route("x", &index, &HashingEmbedder::new(8)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn orthogonal_token_sets_score_zero() {
        let embedder = HashingEmbedder::default();
        // Find a word whose bucket is disjoint from "alpha".
        let alpha = embedder.embed_text("alpha");
        let other = (0..100)
            .map(|i| format!("tok{i}"))
            .find(|w| {
                let v = embedder.embed_text(w);
                alpha.iter().zip(&v).all(|(a, b)| *a == 0.0 || *b == 0.0)
            })
            .unwrap();
        let (index, _) = crate::index::build_vector_index([("k", other.as_str())], &embedder).unwrap();
        assert_eq!(vector_route("alpha", &index, &embedder).unwrap()["k"], 0.0);
    }

    #[test]
    fn unembeddable_query_warns() {
        let docs = vec![crate::corpus::DocumentRecord {
            doc_id: "d".into(),
            title: "D".into(),
            source_path: "d.md".into(),
            segments: crate::formatter::parse_markdown("# 1 A\nalpha", "D").segments,
            images: vec![],
            warnings: vec![],
        }];
        let (docs, _) = crate::hca::augment_documents(&docs, &crate::hca::AugmentOptions::default());
        let (index, _) = crate::index::build_indices(
            &docs,
            &HashingEmbedder::default(),
            &PartNumberExtractor,
            &BTreeSet::new(),
            Default::default(),
        )
        .unwrap();
        let embedder = HashingEmbedder::default();
        let retriever = Retriever::new(&index, &embedder, &PartNumberExtractor).unwrap();
        let out = retriever.retrieve("!!", &BTreeSet::new(), &RetrievalConfig::default()).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.ranking.len(), 1);
        assert_eq!(out.ranking[0].rank, 1);
    }
}
