//! Acceptance gate. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured, so it shows in normal `cargo test` output) and then asserts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strata_core::evalkit::{cohesion_stats, evaluate_dataset, log_rank_score, EvalQuery, EvalReport};
use strata_core::formatter::{convert_document, parse_markdown, plan_windows, IdentityConverter};
use strata_core::hca::{augment_documents, AugmentOptions};
use strata_core::index::{
    build_indices, cosine, embed_default, load_index, save_index, Bm25Index, HashingEmbedder, IndexParams, IndexSet,
    PartNumberExtractor, DEFAULT_B, DEFAULT_K1,
};
use strata_core::retriever::{fuse_and_rank, RetrievalConfig, Retriever};
use strata_core::synthetic::{datasheet_corpus, SyntheticCorpus, TABLE_LABELS, TABLE_SECTION};
use strata_core::text::index_tokens;
use strata_core::{load_corpus, DocumentRecord};

fn report(id: u32, name: &str, started: Instant, limit: Duration, outcome: Result<String, String>) {
    let elapsed = started.elapsed();
    let outcome = outcome.and_then(|detail| {
        if elapsed < limit {
            Ok(detail)
        } else {
            Err(format!("took {elapsed:.2?}, limit {limit:?}"))
        }
    });
    let line = match &outcome {
        Ok(detail) => format!("criterion {id} {name}: PASS ({detail}; {elapsed:.2?})"),
        Err(why) => format!("criterion {id} {name}: FAIL ({why}; {elapsed:.2?})"),
    };
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    if let Err(why) = outcome {
        panic!("criterion {id} failed: {why}");
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($arg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn augmented(docs: &[DocumentRecord], options: &AugmentOptions<'_>) -> Vec<DocumentRecord> {
    augment_documents(docs, options).0
}

fn build(docs: &[DocumentRecord]) -> IndexSet {
    build_indices(
        docs,
        &HashingEmbedder::default(),
        &PartNumberExtractor,
        &BTreeSet::new(),
        IndexParams::default(),
    )
    .expect("index builds")
    .0
}

fn evaluate(index: &IndexSet, queries: &[EvalQuery]) -> EvalReport {
    let embedder = HashingEmbedder::default();
    let retriever = Retriever::new(index, &embedder, &PartNumberExtractor).expect("consistent index");
    evaluate_dataset(queries, &retriever, &RetrievalConfig::default()).expect("evaluation runs")
}

fn no_augmentation() -> AugmentOptions<'static> {
    AugmentOptions {
        cascade: false,
        ..AugmentOptions::default()
    }
}

#[test]
fn criterion_1_log_rank_exactness() {
    let started = Instant::now();
    let outcome = (|| {
        let mut rng = rng(1);
        for _ in 0..100 {
            let n = rng.random_range(2..10_000usize);
            let gamma = rng.random_range(0.001..1000.0f64);
            let top = log_rank_score(1, n, gamma).map_err(|e| e.to_string())?;
            let bottom = log_rank_score(n, n, gamma).map_err(|e| e.to_string())?;
            ensure!(top == 1.0 && bottom == 0.0, "N={n} gamma={gamma}: S(1)={top} S(N)={bottom}");
        }
        let s = log_rank_score(2, 100, 1.0).map_err(|e| e.to_string())?;
        ensure!((s - 0.849485).abs() <= 1e-6, "S(2,100,1) = {s}");
        Ok(format!("S(2,100,1)={s:.6}"))
    })();
    report(1, "log-rank exactness", started, Duration::from_secs(1), outcome);
}

#[test]
fn criterion_2_fusion_exactness() {
    let started = Instant::now();
    let single = |v: f64, r: f64, hits: usize, alpha: f64, beta: f64| {
        let key = || BTreeMap::from([("k".to_owned(), v)]);
        let config = RetrievalConfig {
            alpha,
            beta,
            ..RetrievalConfig::default()
        };
        fuse_and_rank(
            &key(),
            &BTreeMap::from([("k".to_owned(), r)]),
            &BTreeMap::from([("k".to_owned(), hits)]),
            &config,
        )
        .map(|ranking| ranking[0].fused_score)
        .map_err(|e| e.to_string())
    };
    let outcome = (|| {
        // 0.97726 is this value printed to five decimals.
        let worked = single(0.8, 0.6, 3, 0.5, 0.2)?;
        ensure!((worked - 0.977_258_872_2).abs() <= 1e-6, "worked example gave {worked}");
        ensure!(format!("{worked:.5}") == "0.97726", "worked example gave {worked}");
        let mut rng = rng(2);
        for _ in 0..1000 {
            let (alpha, beta) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..5.0));
            let (v, r) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
            let hits = rng.random_range(0..50usize);
            let oracle = alpha * v + (1.0 - alpha) * r + beta * (1.0 + hits as f64).ln();
            let got = single(v, r, hits, alpha, beta)?;
            ensure!((got - oracle).abs() <= 1e-12, "({alpha},{beta},{v},{r},{hits}): {got} vs {oracle}");
        }
        Ok(format!("worked example {worked:.6}"))
    })();
    report(2, "fusion exactness", started, Duration::from_secs(1), outcome);
}

fn naive_bm25(corpus: &[(String, Vec<String>)], query: &[String], target: usize, k1: f64, b: f64) -> f64 {
    let n = corpus.len() as f64;
    let avgdl = corpus.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let doc = &corpus[target].1;
    let mut score = 0.0;
    for term in query {
        let tf = doc.iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = corpus.iter().filter(|(_, t)| t.contains(term)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let norm = if avgdl > 0.0 { doc.len() as f64 / avgdl } else { 0.0 };
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
    }
    score
}

#[test]
fn criterion_3_bm25_oracle() {
    let started = Instant::now();
    let outcome = (|| {
        let mut rng = rng(3);
        let vocabulary: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let mut checked = 0;
        for _ in 0..100 {
            let segments = rng.random_range(1..=50usize);
            let corpus: Vec<(String, Vec<String>)> = (0..segments)
                .map(|s| {
                    let len = rng.random_range(0..=200usize);
                    let tokens = (0..len).map(|_| vocabulary[rng.random_range(0..vocabulary.len())].clone()).collect();
                    (format!("s{s:02}"), tokens)
                })
                .collect();
            let texts: Vec<(String, String)> = corpus.iter().map(|(k, t)| (k.clone(), t.join(" "))).collect();
            let index = Bm25Index::build(texts.iter().map(|(k, t)| (k.as_str(), t.as_str())), DEFAULT_K1, DEFAULT_B)
                .map_err(|e| e.to_string())?;
            for _ in 0..5 {
                let query: Vec<String> = (0..rng.random_range(1..6))
                    .map(|_| vocabulary[rng.random_range(0..vocabulary.len())].clone())
                    .collect();
                let joined = query.join(" ");
                ensure!(index_tokens(&joined) == query, "query tokenization changed");
                for (i, (key, _)) in corpus.iter().enumerate() {
                    let got = index.score(&joined, key).map_err(|e| e.to_string())?;
                    let want = naive_bm25(&corpus, &query, i, DEFAULT_K1, DEFAULT_B);
                    ensure!((got - want).abs() <= 1e-9, "{key} `{joined}`: {got} vs {want}");
                    checked += 1;
                }
            }
        }
        let worked = Bm25Index::build([("d1", "a b"), ("d2", "a")], DEFAULT_K1, DEFAULT_B)
            .and_then(|index| index.score("b", "d1"))
            .map_err(|e| e.to_string())?;
        ensure!((worked - 0.6100).abs() <= 1e-3, "worked example gave {worked}");
        Ok(format!("{checked} scores checked, worked example {worked:.4}"))
    })();
    report(3, "BM25 oracle equivalence", started, Duration::from_secs(5), outcome);
}

fn random_text(rng: &mut ChaCha8Rng, words: usize) -> String {
    const GAPS: [&str; 5] = [" ", "  ", "\n", "\t", " \n\n"];
    let mut text = String::new();
    if rng.random_bool(0.3) {
        text.push_str(GAPS[rng.random_range(0..GAPS.len())]);
    }
    for i in 0..words {
        if i > 0 {
            text.push_str(GAPS[rng.random_range(0..GAPS.len())]);
        }
        text.push_str(&format!("w{}", rng.random_range(0..1000)));
    }
    if rng.random_bool(0.3) {
        text.push('\n');
    }
    text
}

#[test]
fn criterion_4_window_tiling() {
    let started = Instant::now();
    let outcome = (|| {
        let mut rng = rng(4);
        for case in 0..500 {
            let n = rng.random_range(0..3000usize);
            let w = rng.random_range(1..500usize);
            let k = rng.random_range(0..300usize);
            let plan = plan_windows(n, w, k).map_err(|e| e.to_string())?;
            ensure!(plan.iterations() == n.div_ceil(w), "case {case}: {} turns for N={n} W={w}", plan.iterations());
            let mut next = 0;
            for (i, core) in plan.cores().enumerate() {
                let span = &plan.spans[i];
                ensure!(core.start == next && core.end > core.start, "case {case}: gap or overlap at turn {i}");
                ensure!(span.start <= core.start && core.end <= span.end && span.end <= n, "case {case}: span {span:?}");
                next = core.end;
            }
            ensure!(next == n, "case {case}: cores end at {next}, N={n}");

            let text = random_text(&mut rng, n.min(600));
            let plan = plan_windows(n.min(600), w, 0).map_err(|e| e.to_string())?;
            let out = convert_document(&text, &mut IdentityConverter, &plan).map_err(|e| e.to_string())?;
            ensure!(out == text, "case {case}: identity round trip differs");
        }
        Ok("500 plans tiled, identity round trips exact".into())
    })();
    report(4, "window tiling", started, Duration::from_secs(2), outcome);
}

struct GenNode {
    number: Vec<usize>,
    title: String,
    parent: Option<usize>,
}

/// Random gap-free chapter tree in document order.
fn random_tree(rng: &mut ChaCha8Rng) -> Vec<GenNode> {
    fn grow(rng: &mut ChaCha8Rng, nodes: &mut Vec<GenNode>, parent: Option<usize>, prefix: Vec<usize>, budget: usize) {
        let depth = prefix.len();
        if depth >= 5 {
            return;
        }
        let children = if depth == 0 { rng.random_range(1..8) } else { rng.random_range(0..5) };
        for c in 1..=children {
            if nodes.len() >= budget {
                return;
            }
            let mut number = prefix.clone();
            number.push(c);
            let id = nodes.len();
            nodes.push(GenNode {
                number: number.clone(),
                title: format!("Topic {id} Notes"),
                parent,
            });
            grow(rng, nodes, Some(id), number, budget);
        }
    }
    let budget = rng.random_range(1..=200);
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, None, Vec::new(), budget);
    nodes
}

#[test]
fn criterion_5_path_oracle() {
    let started = Instant::now();
    let outcome = (|| {
        let mut rng = rng(5);
        let mut total = 0;
        for case in 0..100 {
            let nodes = random_tree(&mut rng);
            let label = |n: &GenNode| {
                let num: Vec<String> = n.number.iter().map(ToString::to_string).collect();
                format!("{} {}", num.join("."), n.title)
            };
            let markdown: String = nodes.iter().map(|n| format!("# {}\nbody of {}\n", label(n), n.title)).collect();
            let title = format!("Manual {case}");
            let doc = DocumentRecord {
                doc_id: format!("m{case}"),
                title: title.clone(),
                source_path: "m.md".into(),
                segments: parse_markdown(&markdown, &title).segments,
                images: vec![],
                warnings: vec![],
            };
            let docs = augmented(&[doc], &AugmentOptions::default());
            let segments = &docs[0].segments;
            ensure!(segments.len() == nodes.len(), "case {case}: {} segments for {} nodes", segments.len(), nodes.len());
            for (node, segment) in nodes.iter().zip(segments) {
                let mut oracle = Vec::new();
                let mut cursor = Some(node);
                while let Some(n) = cursor {
                    oracle.push(label(n));
                    cursor = n.parent.map(|p| &nodes[p]);
                }
                oracle.push(title.clone());
                oracle.reverse();
                ensure!(segment.metadata_path == oracle, "case {case}: {:?} vs {oracle:?}", segment.metadata_path);
                ensure!(
                    segment.metadata_path.len() == segment.level + 1,
                    "case {case}: path length {} at level {}",
                    segment.metadata_path.len(),
                    segment.level
                );
            }
            total += nodes.len();
        }
        Ok(format!("{total} segments over 100 trees"))
    })();
    report(5, "metadata path oracle", started, Duration::from_secs(2), outcome);
}

#[test]
fn criterion_6_augmentation_beats_baseline() {
    let started = Instant::now();
    let outcome = (|| {
        let corpus = datasheet_corpus(20, 40);
        let docs = corpus.records().map_err(|e| e.to_string())?;
        let with = evaluate(&build(&augmented(&docs, &AugmentOptions::default())), &corpus.queries);
        let without = evaluate(&build(&augmented(&docs, &no_augmentation())), &corpus.queries);
        let gain = with.summary.mean - without.summary.mean;
        ensure!(gain >= 0.05, "mean log-rank {:.4} vs {:.4}", with.summary.mean, without.summary.mean);
        let (acc_with, acc_without) = (with.hit_rate(1), without.hit_rate(1));
        ensure!(acc_with > acc_without, "rank-1 accuracy {acc_with} vs {acc_without}");

        let mut curve = Vec::new();
        for size in [5, 10, 15, 20] {
            let sub: SyntheticCorpus = corpus.truncated(size);
            let docs = sub.records().map_err(|e| e.to_string())?;
            let report = evaluate(&build(&augmented(&docs, &no_augmentation())), &sub.queries);
            curve.push((size, report.hit_rate(1)));
        }
        ensure!(
            curve.windows(2).all(|w| w[1].1 <= w[0].1),
            "baseline accuracy not non-increasing: {curve:?}"
        );
        Ok(format!(
            "log-rank {:.4} vs {:.4}, rank-1 {acc_with:.3} vs {acc_without:.3}, baseline curve {curve:?}",
            with.summary.mean, without.summary.mean
        ))
    })();
    report(6, "augmentation vs baseline", started, Duration::from_secs(30), outcome);
}

#[test]
fn criterion_7_table_projection() {
    let started = Instant::now();
    let outcome = (|| {
        let corpus = datasheet_corpus(20, 0);
        let docs = corpus.records().map_err(|e| e.to_string())?;
        let projected = augmented(&docs, &AugmentOptions::default());
        let raw = augmented(
            &docs,
            &AugmentOptions {
                table_projection: false,
                ..AugmentOptions::default()
            },
        );
        let mut inverted = Vec::new();
        let mut compared = 0;
        let mut gain = 0.0;
        for ((doc, p), r) in corpus.documents.iter().zip(&projected).zip(&raw) {
            let (p, r) = (&p.segments[TABLE_SECTION - 1], &r.segments[TABLE_SECTION - 1]);
            ensure!(p.content == r.content, "projection altered table content");
            let mut queries: Vec<String> = TABLE_LABELS.iter().map(|l| (*l).to_owned()).collect();
            queries.extend(TABLE_LABELS.iter().map(|l| format!("{} {l}", doc.part)));
            queries.push(TABLE_LABELS.join(" "));
            for query in queries {
                let q = embed_default(&query);
                let with = cosine(&q, &embed_default(&p.embedding_text));
                let without = cosine(&q, &embed_default(&r.embedding_text));
                if with < without {
                    inverted.push(format!("{}/`{query}` {with:.4}<{without:.4}", doc.part));
                }
                gain += with - without;
                compared += 1;
            }
        }
        let mean_gain = gain / f64::from(compared);
        ensure!(
            inverted.is_empty(),
            "{} of {compared} queries lose similarity (mean gain {mean_gain:.4}); first: {}",
            inverted.len(),
            inverted[0]
        );
        Ok(format!("{compared} queries, mean gain {mean_gain:.4}"))
    })();
    report(7, "table projection", started, Duration::from_secs(5), outcome);
}

#[test]
fn criterion_8_cohesion() {
    let started = Instant::now();
    let outcome = (|| {
        let corpus = datasheet_corpus(20, 0);
        let docs = corpus.records().map_err(|e| e.to_string())?;
        let groups = |docs: &[DocumentRecord]| -> BTreeMap<String, Vec<Vec<f32>>> {
            docs.iter()
                .map(|d| (d.doc_id.clone(), d.segments.iter().map(|s| embed_default(&s.embedding_text)).collect()))
                .collect()
        };
        let with_groups = groups(&augmented(&docs, &AugmentOptions::default()));
        let without_groups = groups(&augmented(&docs, &no_augmentation()));
        let with = cohesion_stats(&with_groups).map_err(|e| e.to_string())?;
        let without = cohesion_stats(&without_groups).map_err(|e| e.to_string())?;

        let mut margin = f64::INFINITY;
        for (doc, stats) in &with {
            let a = stats.mean_pairwise_cosine.ok_or("singleton group")?;
            let b = without[doc].mean_pairwise_cosine.ok_or("singleton group")?;
            ensure!(a > b, "{doc}: {a:.4} <= {b:.4}");
            margin = margin.min(a - b);
        }
        for (groups, stats) in [(&with_groups, &with), (&without_groups, &without)] {
            for (doc, vectors) in groups {
                let mut sum = 0.0;
                let mut pairs = 0;
                for i in 0..vectors.len() {
                    for j in i + 1..vectors.len() {
                        sum += cosine(&vectors[i], &vectors[j]);
                        pairs += 1;
                    }
                }
                let brute = sum / f64::from(pairs);
                let fast = stats[doc].mean_pairwise_cosine.unwrap();
                ensure!((brute - fast).abs() <= 1e-9, "{doc}: {fast} vs brute force {brute}");
            }
        }
        Ok(format!("20 documents, smallest margin {margin:.4}"))
    })();
    report(8, "cohesion direction", started, Duration::from_secs(5), outcome);
}

fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_9_persistence() {
    let started = Instant::now();
    let outcome = (|| {
        let corpus = datasheet_corpus(20, 40);
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let source = root.path().join("corpus");
        corpus.write_to(&source).map_err(|e| e.to_string())?;

        let ingest = |out: &std::path::Path| -> Result<IndexSet, String> {
            let docs = load_corpus(&source, None).map_err(|e| e.to_string())?;
            let index = build(&augmented(&docs, &AugmentOptions::default()));
            save_index(&index, out).map_err(|e| e.to_string())?;
            Ok(index)
        };
        let first = ingest(&root.path().join("a"))?;
        ingest(&root.path().join("b"))?;
        ensure!(
            snapshot(&root.path().join("a")) == snapshot(&root.path().join("b")),
            "repeated ingest produced different files"
        );

        let loaded = load_index(&root.path().join("a")).map_err(|e| e.to_string())?;
        let before = evaluate(&first, &corpus.queries);
        let after = evaluate(&loaded, &corpus.queries);
        for (x, y) in before.per_query.iter().zip(&after.per_query) {
            ensure!(
                x.query_id == y.query_id && x.score.to_bits() == y.score.to_bits(),
                "{}: {} vs {}",
                x.query_id,
                x.score,
                y.score
            );
        }
        ensure!(before.per_query.len() == after.per_query.len(), "query count changed");
        Ok(format!("{} scores bit-exact, index files identical", before.per_query.len()))
    })();
    report(9, "persistence and determinism", started, Duration::from_secs(10), outcome);
}
