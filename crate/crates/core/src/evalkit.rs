//! Ranking evaluation with the log-rank index, plus embedding cohesion
//! statistics and 2-D PCA coordinates for inspecting segment distributions.
//!
//! The log-rank score of a relevant segment at 1-based rank `r` in a full
//! ranking of `N` segments is
//!
//! ```text
//! S(r) = 1 - ln(1 + gamma * (r - 1)) / ln(1 + gamma * (N - 1))
//! ```
//!
//! A query scores the mean of `S` over its relevant segments. Larger `gamma`
//! makes the curve fall faster near the top of the ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::IndexSet;
use crate::retriever::{RankedResult, RetrievalConfig, Retriever};

pub fn log_rank_score(rank: usize, corpus_size: usize, gamma: f64) -> Result<f64> {
    if corpus_size < 2 {
        return Err(Error::invalid("corpus_size", format!("needs at least 2 segments, got {corpus_size}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    if rank == 0 || rank > corpus_size {
        return Err(Error::invalid("rank", format!("must lie in 1..={corpus_size}, got {rank}")));
    }
    let numerator = (gamma * (rank - 1) as f64).ln_1p();
    let denominator = (gamma * (corpus_size - 1) as f64).ln_1p();
    Ok(1.0 - numerator / denominator)
}

/// One question-bank line:
/// `{"id": "q1", "query": "...", "relevant": ["doc#1.2"], "keywords": ["tps7a47"]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    #[serde(rename = "id")]
    pub query_id: String,
    pub query: String,
    #[serde(rename = "relevant")]
    pub relevant_keys: BTreeSet<String>,
    #[serde(rename = "keywords", default, skip_serializing_if = "BTreeSet::is_empty")]
    pub user_keywords: BTreeSet<String>,
}

/// Reads a JSONL question bank; blank lines are skipped.
pub fn load_question_bank(path: &Path) -> Result<Vec<EvalQuery>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    let mut queries = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Read {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let query: EvalQuery = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.with_file_name(format!(
                "{}:{}",
                path.file_name().unwrap_or_default().to_string_lossy(),
                n + 1
            )),
            source,
        })?;
        if query.relevant_keys.is_empty() {
            return Err(Error::invalid(
                "relevant",
                format!("query `{}` lists no relevant segments", query.query_id),
            ));
        }
        queries.push(query);
    }
    Ok(queries)
}

/// Fails with every query id whose relevant keys are not all in the index.
pub fn validate_queries(queries: &[EvalQuery], index: &IndexSet) -> Result<()> {
    let offending: Vec<String> = queries
        .iter()
        .filter(|q| q.relevant_keys.iter().any(|k| index.segment(k).is_none()))
        .map(|q| q.query_id.clone())
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownRelevantKeys { query_ids: offending })
    }
}

/// Mean log-rank score over the query's relevant segments.
pub fn evaluate_query(ranking: &[RankedResult], query: &EvalQuery, gamma: f64) -> Result<f64> {
    if query.relevant_keys.is_empty() {
        return Err(Error::invalid("relevant", "no relevant segments"));
    }
    let ranks: BTreeMap<&str, usize> = ranking.iter().map(|r| (r.segment_key.as_str(), r.rank)).collect();
    let mut total = 0.0;
    for key in &query.relevant_keys {
        let &rank = ranks.get(key.as_str()).ok_or_else(|| Error::UnknownKey(key.clone()))?;
        total += log_rank_score(rank, ranking.len(), gamma)?;
    }
    Ok(total / query.relevant_keys.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub score: f64,
    /// Best rank among the relevant segments.
    pub best_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Degenerate("no scores to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// In question-bank order.
    pub per_query: Vec<QueryScore>,
    #[serde(flatten)]
    pub summary: Summary,
    pub gamma: f64,
    pub corpus_size: usize,
}

impl EvalReport {
    /// Fraction of queries with a relevant segment ranked within `k`.
    pub fn hit_rate(&self, k: usize) -> f64 {
        let hits = self.per_query.iter().filter(|q| q.best_rank <= k).count();
        hits as f64 / self.per_query.len() as f64
    }
}

/// Runs every query through the retriever and aggregates log-rank scores.
pub fn evaluate_dataset(queries: &[EvalQuery], retriever: &Retriever<'_>, config: &RetrievalConfig) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::Degenerate("question bank is empty".into()));
    }
    config.validate()?;
    let mut per_query = Vec::with_capacity(queries.len());
    let mut corpus_size = 0;
    for query in queries {
        let wrap = |source: Error| Error::Query {
            query_id: query.query_id.clone(),
            source: Box::new(source),
        };
        let retrieval = retriever
            .retrieve(&query.query, &query.user_keywords, config)
            .map_err(wrap)?;
        corpus_size = retrieval.ranking.len();
        let score = evaluate_query(&retrieval.ranking, query, config.gamma).map_err(wrap)?;
        let best_rank = query
            .relevant_keys
            .iter()
            .filter_map(|k| retrieval.rank_of(k))
            .min()
            .expect("relevant keys were ranked");
        per_query.push(QueryScore {
            query_id: query.query_id.clone(),
            score,
            best_rank,
        });
    }
    let scores: Vec<f64> = per_query.iter().map(|q| q.score).collect();
    Ok(EvalReport {
        summary: Summary::of(&scores)?,
        per_query,
        gamma: config.gamma,
        corpus_size,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohesionStats {
    /// Mean cosine over unordered pairs; `None` for singleton groups.
    pub mean_pairwise_cosine: Option<f64>,
    /// Length of the group's mean vector.
    pub centroid_norm: f64,
    pub count: usize,
}

/// Tolerance on `|v| - 1` for vectors passed to [`cohesion_stats`].
pub const UNIT_TOLERANCE: f64 = 1e-5;

/// Per-group cohesion of unit vectors.
///
/// Uses `sum_{i<j} <v_i, v_j> = (|sum v|^2 - n) / 2` over vectors renormalized
/// in `f64`, so cost is linear in group size.
pub fn cohesion_stats(groups: &BTreeMap<String, Vec<Vec<f32>>>) -> Result<BTreeMap<String, CohesionStats>> {
    let mut out = BTreeMap::new();
    for (group, vectors) in groups {
        if vectors.is_empty() {
            return Err(Error::Degenerate(format!("group `{group}` is empty")));
        }
        let dim = vectors[0].len();
        let mut sum = vec![0.0f64; dim];
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    index: dim,
                    embedder: v.len(),
                });
            }
            let norm = crate::index::l2_norm(v);
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NotUnitVector { norm });
            }
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += f64::from(x) / norm;
            }
        }
        let n = vectors.len() as f64;
        let sum_sq: f64 = sum.iter().map(|x| x * x).sum();
        let mean_pairwise_cosine = (vectors.len() > 1).then(|| (sum_sq - n) / (n * (n - 1.0)));
        out.insert(
            group.clone(),
            CohesionStats {
                mean_pairwise_cosine,
                centroid_norm: sum_sq.sqrt() / n,
                count: vectors.len(),
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateRow {
    pub key: String,
    pub x: f64,
    pub y: f64,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub rows: Vec<CoordinateRow>,
    /// Share of total variance on the two principal axes.
    pub explained_variance_ratio: f64,
    /// Top two covariance eigenvalues, descending.
    pub eigenvalues: [f64; 2],
}

/// A point to project: `(key, group, vector)`.
pub type LabeledVector = (String, String, Vec<f32>);

/// Projects onto the top two eigenvectors of the covariance of the centered
/// points. Each eigenvector's first component above 1e-12 in magnitude is made
/// positive so output is reproducible.
pub fn export_coordinates(points: &[LabeledVector]) -> Result<Projection> {
    if points.len() < 2 {
        return Err(Error::Degenerate("PCA needs at least 2 vectors".into()));
    }
    let dim = points[0].2.len();
    if dim < 2 {
        return Err(Error::Degenerate("PCA needs vectors of dimension >= 2".into()));
    }
    if let Some(p) = points.iter().find(|p| p.2.len() != dim) {
        return Err(Error::DimensionMismatch {
            index: dim,
            embedder: p.2.len(),
        });
    }
    let first = &points[0].2;
    if points.iter().all(|p| &p.2 == first) {
        return Err(Error::Degenerate("PCA needs at least 2 distinct vectors".into()));
    }

    let n = points.len();
    let mut mean = vec![0.0f64; dim];
    for (_, _, v) in points {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| f64::from(points[i].2[j]) - mean[j]);
    let covariance = (centered.transpose() * &centered) / n as f64;

    let eigen = SymmetricEigen::new(covariance);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    let trace: f64 = eigen.eigenvalues.iter().map(|l| l.max(0.0)).sum();

    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&c| {
            let mut axis: Vec<f64> = eigen.eigenvectors.column(c).iter().copied().collect();
            if axis.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0) {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            axis
        })
        .collect();
    let eigenvalues = [eigen.eigenvalues[order[0]].max(0.0), eigen.eigenvalues[order[1]].max(0.0)];

    let rows = points
        .iter()
        .enumerate()
        .map(|(i, (key, group, _))| {
            let row = centered.row(i);
            let project = |axis: &[f64]| row.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>();
            CoordinateRow {
                key: key.clone(),
                x: project(&axes[0]),
                y: project(&axes[1]),
                group: group.clone(),
            }
        })
        .collect();

    Ok(Projection {
        rows,
        explained_variance_ratio: if trace > 0.0 {
            (eigenvalues[0] + eigenvalues[1]) / trace
        } else {
            0.0
        },
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranked(keys: &[&str]) -> Vec<RankedResult> {
        keys.iter()
            .enumerate()
            .map(|(i, k)| RankedResult {
                segment_key: (*k).to_owned(),
                score_v: 0.0,
                score_r: 0.0,
                keyword_hits: 0,
                fused_score: -(i as f64),
                rank: i + 1,
            })
            .collect()
    }

    fn query(relevant: &[&str]) -> EvalQuery {
        EvalQuery {
            query_id: "q".into(),
            query: "x".into(),
            relevant_keys: relevant.iter().map(|s| (*s).to_owned()).collect(),
            user_keywords: BTreeSet::new(),
        }
    }

    #[test]
    fn endpoints() {
        assert_eq!(log_rank_score(1, 2, 0.3).unwrap(), 1.0);
        assert_eq!(log_rank_score(57, 57, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn rank_two_of_hundred() {
        let expected = 1.0 - 2f64.ln() / 100f64.ln();
        let got = log_rank_score(2, 100, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.84949).abs() < 1e-5);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(log_rank_score(1, 1, 1.0).is_err());
        assert!(log_rank_score(0, 10, 1.0).is_err());
        assert!(log_rank_score(11, 10, 1.0).is_err());
        assert!(log_rank_score(1, 10, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn strictly_decreasing_in_rank(n in 2usize..500, gamma in 0.01f64..100.0) {
            let mut previous = f64::INFINITY;
            for r in 1..=n {
                let s = log_rank_score(r, n, gamma).unwrap();
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert!(s < previous);
                previous = s;
            }
        }

        #[test]
        fn larger_gamma_drops_faster(n in 3usize..500, g in 0.01f64..50.0, factor in 1.01f64..10.0, r_frac in 0.0f64..1.0) {
            let r = 2 + ((n - 3) as f64 * r_frac) as usize;
            prop_assume!(r < n);
            prop_assert!(log_rank_score(r, n, g * factor).unwrap() < log_rank_score(r, n, g).unwrap());
        }
    }

    #[test]
    fn average_over_relevant() {
        let keys: Vec<String> = (0..10).map(|i| format!("k{i}")).collect();
        let refs: Vec<&str> = keys.iter().map(String::as_str).collect();
        let ranking = ranked(&refs);
        let score = evaluate_query(&ranking, &query(&["k0", "k2"]), 1.0).unwrap();
        assert!((score - (1.0 + (1.0 - 3f64.ln() / 10f64.ln())) / 2.0).abs() < 1e-15);
        assert!((score - 0.76144).abs() < 1e-5);
        assert_eq!(evaluate_query(&ranking, &query(&["k0"]), 1.0).unwrap(), 1.0);
        assert_eq!(evaluate_query(&ranking, &query(&["k9"]), 1.0).unwrap(), 0.0);
        assert!(matches!(
            evaluate_query(&ranking, &query(&["nope"]), 1.0),
            Err(Error::UnknownKey(_))
        ));
    }

    #[test]
    fn stable_under_shuffling_irrelevant() {
        let a = ranked(&["x", "r1", "y", "z", "r2", "w"]);
        let b = ranked(&["w", "r1", "z", "x", "r2", "y"]);
        let q = query(&["r1", "r2"]);
        assert_eq!(evaluate_query(&a, &q, 2.0).unwrap(), evaluate_query(&b, &q, 2.0).unwrap());
    }

    #[test]
    fn population_std() {
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.max, s.min, s.std), (2.0, 3.0, 1.0, 1.0));
        let s = Summary::of(&[0.7]).unwrap();
        assert_eq!((s.mean, s.max, s.min, s.std), (0.7, 0.7, 0.7, 0.0));
        assert!(Summary::of(&[]).is_err());
    }

    #[test]
    fn cohesion_basics() {
        let groups = BTreeMap::from([
            ("same".to_owned(), vec![vec![0.6f32, 0.8], vec![0.6, 0.8], vec![0.6, 0.8]]),
            ("orth".to_owned(), vec![vec![1.0f32, 0.0], vec![0.0, 1.0]]),
            ("one".to_owned(), vec![vec![1.0f32, 0.0]]),
        ]);
        let stats = cohesion_stats(&groups).unwrap();
        assert!((stats["same"].mean_pairwise_cosine.unwrap() - 1.0).abs() < 1e-6);
        assert!(stats["orth"].mean_pairwise_cosine.unwrap().abs() < 1e-12);
        assert_eq!(stats["one"].mean_pairwise_cosine, None);
        assert_eq!(stats["one"].count, 1);
        assert!((stats["orth"].centroid_norm - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cohesion_rejects_non_unit() {
        let groups = BTreeMap::from([("g".to_owned(), vec![vec![2.0f32, 0.0]])]);
        assert!(matches!(cohesion_stats(&groups), Err(Error::NotUnitVector { .. })));
    }

    fn labeled(vectors: Vec<Vec<f32>>) -> Vec<LabeledVector> {
        vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("p{i}"), "g".to_owned(), v))
            .collect()
    }

    #[test]
    fn planar_points_keep_distances() {
        let dim = 12;
        let coords = [(0.0f32, 0.0f32), (1.0, 0.0), (0.0, 2.0), (3.0, 1.5), (-1.0, -0.5)];
        let points: Vec<Vec<f32>> = coords
            .iter()
            .map(|&(a, b)| {
                let mut v = vec![0.0f32; dim];
                v[3] = a;
                v[7] = b;
                v
            })
            .collect();
        let projection = export_coordinates(&labeled(points)).unwrap();
        assert!((projection.explained_variance_ratio - 1.0).abs() < 1e-9);
        for i in 0..coords.len() {
            for j in 0..coords.len() {
                let (pi, pj) = (&projection.rows[i], &projection.rows[j]);
                let got = ((pi.x - pj.x).powi(2) + (pi.y - pj.y).powi(2)).sqrt();
                let want = (f64::from(coords[i].0 - coords[j].0).powi(2) + f64::from(coords[i].1 - coords[j].1).powi(2)).sqrt();
                assert!((got - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn duplicates_share_coordinates() {
        let projection = export_coordinates(&labeled(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]))
        .unwrap();
        assert_eq!(projection.rows[0].x, projection.rows[2].x);
        assert_eq!(projection.rows[0].y, projection.rows[2].y);
    }

    #[test]
    fn pca_needs_two_distinct() {
        assert!(export_coordinates(&labeled(vec![vec![1.0, 0.0]])).is_err());
        assert!(export_coordinates(&labeled(vec![vec![1.0, 0.0], vec![1.0, 0.0]])).is_err());
    }
}
