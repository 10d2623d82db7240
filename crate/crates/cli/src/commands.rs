use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use strata_core::corpus::{load_corpus_with, SegmentationOptions};
use strata_core::evalkit::{
    cohesion_stats, evaluate_dataset, export_coordinates, load_question_bank, validate_queries, CohesionStats,
    LabeledVector, Projection,
};
use strata_core::hca::{augment_documents, uncascaded_text, AugmentOptions, IMAGE_CONTEXT_WORDS};
use strata_core::index::{
    build_indices, is_unembeddable, load_index, save_index, unit, Embedder, IndexParams, IndexSet, KeywordExtractor,
};
use strata_core::plugin::AnswerAdapter;
use strata_core::retriever::{RankedResult, Retriever};

use crate::config::AppConfig;
use crate::{Grouping, UsageError};

const SNIPPET_CHARS: usize = 72;

fn warn(message: impl std::fmt::Display) {
    eprintln!("warning: {message}");
}

pub fn ingest(config: &AppConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = config
        .corpus_dir
        .as_deref()
        .ok_or_else(|| UsageError("no corpus directory: pass --corpus or set corpus_dir in the config".into()))?;
    if !corpus.is_dir() {
        bail!("corpus directory {} does not exist", corpus.display());
    }

    let mut options = SegmentationOptions {
        window_words: config.window_words,
        padding_words: config.padding_words,
        converter: None,
    };
    let docs = load_corpus_with(corpus, config.manifest.as_deref(), &mut options)
        .with_context(|| format!("loading corpus {}", corpus.display()))?;
    let mut warnings: Vec<_> = docs.iter().flat_map(|d| d.warnings.iter().cloned()).collect();

    let captioner = config.captioner()?;
    let (docs, augment_warnings) = augment_documents(
        &docs,
        &AugmentOptions {
            cascade: config.cascade,
            table_projection: config.table_projection,
            image_context_words: IMAGE_CONTEXT_WORDS,
            captioner: captioner.as_deref(),
        },
    );
    warnings.extend(augment_warnings);

    let embedder = config.embedder()?;
    let extractor = config.extractor()?;
    let (index, index_warnings) = build_indices(
        &docs,
        embedder.as_ref(),
        extractor.as_ref(),
        &config.dictionary()?,
        IndexParams {
            k1: config.k1,
            b: config.b,
        },
    )?;
    warnings.extend(index_warnings);
    save_index(&index, &config.index_dir)?;

    if docs.is_empty() {
        warn(format!("no documents found under {}", corpus.display()));
    }
    for w in &warnings {
        warn(w);
    }
    let embedded = index.vector.len();
    writeln!(
        out,
        "ingested {} documents, {} segments ({} embedded, {} skipped) into {}",
        docs.len(),
        index.segments.len(),
        embedded,
        index.segments.len() - embedded,
        config.index_dir.display()
    )?;
    writeln!(out, "warnings: {}", warnings.len())?;
    Ok(())
}

fn open_index(config: &AppConfig) -> Result<IndexSet> {
    let dir = &config.index_dir;
    if !dir.join("manifest.json").is_file() {
        bail!(
            "no index found at {}; run `strata ingest --corpus <dir> --index {}` first",
            dir.display(),
            dir.display()
        );
    }
    load_index(dir).with_context(|| format!("loading index {}", dir.display()))
}

fn components(config: &AppConfig, index: &IndexSet) -> Result<(Box<dyn Embedder>, Box<dyn KeywordExtractor>)> {
    let embedder = config.embedder()?;
    if embedder.name() != index.embedder {
        bail!(
            "index was built with embedder `{}` but the config selects `{}`; re-run ingest",
            index.embedder,
            embedder.name()
        );
    }
    Ok((embedder, config.extractor()?))
}

#[derive(Serialize)]
struct ContextEntry<'a> {
    rank: usize,
    segment_key: &'a str,
    fused_score: f64,
    score_v: f64,
    score_r: f64,
    keyword_hits: usize,
    doc_title: &'a str,
    metadata_path: &'a [String],
    content: &'a str,
}

#[derive(Serialize)]
struct ContextBundle<'a> {
    query: &'a str,
    query_keywords: &'a BTreeSet<String>,
    alpha: f64,
    beta: f64,
    top_k: usize,
    results: Vec<ContextEntry<'a>>,
    warnings: Vec<String>,
}

fn snippet(text: &str) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(SNIPPET_CHARS) {
        Some((cut, _)) => format!("{}...", &flat[..cut]),
        None => flat,
    }
}

pub fn query(
    config: &AppConfig,
    text: &str,
    keywords: &[String],
    json: bool,
    answer: bool,
    out: &mut dyn Write,
) -> Result<()> {
    if answer && config.answer_plugin.is_none() {
        return Err(UsageError("--answer needs `answer_plugin` in the config".into()).into());
    }
    let index = open_index(config)?;
    let (embedder, extractor) = components(config, &index)?;
    let retriever = Retriever::new(&index, embedder.as_ref(), extractor.as_ref())?;
    let user: BTreeSet<String> = keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    let retrieval = retriever.retrieve(text, &user, &config.retrieval())?;
    let top = retrieval.top_k(config.top_k);
    let record_of = |r: &RankedResult| index.segment(&r.segment_key).expect("ranked keys come from the index");

    if json {
        let bundle = ContextBundle {
            query: text,
            query_keywords: &retrieval.query_keywords,
            alpha: config.alpha,
            beta: config.beta,
            top_k: config.top_k,
            results: top
                .iter()
                .map(|r| {
                    let record = record_of(r);
                    ContextEntry {
                        rank: r.rank,
                        segment_key: &r.segment_key,
                        fused_score: r.fused_score,
                        score_v: r.score_v,
                        score_r: r.score_r,
                        keyword_hits: r.keyword_hits,
                        doc_title: &record.doc_title,
                        metadata_path: &record.segment.metadata_path,
                        content: &record.segment.content,
                    }
                })
                .collect(),
            warnings: retrieval.warnings.iter().map(ToString::to_string).collect(),
        };
        serde_json::to_writer_pretty(&mut *out, &bundle)?;
        writeln!(out)?;
    } else {
        for w in &retrieval.warnings {
            warn(w);
        }
        writeln!(out, "{:>4}  {:>7}  {:>7}  {:>7}  {:>3}  segment", "rank", "fused", "vector", "bm25", "|C|")?;
        for r in top {
            let record = record_of(r);
            writeln!(
                out,
                "{:>4}  {:>7.4}  {:>7.4}  {:>7.4}  {:>3}  {}",
                r.rank, r.fused_score, r.score_v, r.score_r, r.keyword_hits, r.segment_key
            )?;
            writeln!(out, "      path: {}", record.segment.metadata_path.join(" > "))?;
            writeln!(out, "      text: {}", snippet(&record.segment.content))?;
        }
    }

    if answer {
        let plugin = config.answer_plugin.as_ref().expect("checked above");
        let mut adapter = AnswerAdapter::spawn(&plugin.command, &plugin.args)?;
        let context: Vec<String> = top
            .iter()
            .map(|r| {
                let record = record_of(r);
                format!("{}\n{}", record.segment.metadata_path.join(" > "), record.segment.content)
            })
            .collect();
        writeln!(out, "answer: {}", adapter.answer(text, &context)?)?;
    }
    Ok(())
}

pub fn eval(config: &AppConfig, bank: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let queries = load_question_bank(bank)?;
    if queries.is_empty() {
        bail!("question bank {} is empty", bank.display());
    }
    let index = open_index(config)?;
    validate_queries(&queries, &index)?;
    let (embedder, extractor) = components(config, &index)?;
    let retriever = Retriever::new(&index, embedder.as_ref(), extractor.as_ref())?;
    let report = evaluate_dataset(&queries, &retriever, &config.retrieval())?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["query_id", "score"])?;
    for q in &report.per_query {
        csv.write_record([q.query_id.clone(), q.score.to_string()])?;
    }
    csv.write_record(["__summary__".to_owned(), report.summary.mean.to_string()])?;
    let csv = csv.into_inner().map_err(|e| anyhow!("{e}"))?;

    let s = &report.summary;
    let summary = format!(
        "queries={} mean={} max={} min={} std={} gamma={} segments={} rank1={}",
        report.per_query.len(),
        s.mean,
        s.max,
        s.min,
        s.std,
        report.gamma,
        report.corpus_size,
        report.hit_rate(1)
    );
    match output {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "{summary}")?;
        }
        None => {
            out.write_all(&csv)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

struct Variant {
    name: &'static str,
    stats: BTreeMap<String, CohesionStats>,
    projection: Projection,
}

fn variant(name: &'static str, points: Vec<LabeledVector>) -> Result<Variant> {
    let mut groups: BTreeMap<String, Vec<Vec<f32>>> = BTreeMap::new();
    for (_, group, v) in &points {
        groups.entry(group.clone()).or_default().push(v.clone());
    }
    Ok(Variant {
        name,
        stats: cohesion_stats(&groups)?,
        projection: export_coordinates(&points).with_context(|| format!("projecting {name} embeddings"))?,
    })
}

pub fn cohesion(config: &AppConfig, by: Grouping, output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let index = open_index(config)?;
    let (embedder, _) = components(config, &index)?;

    let mut augmented = Vec::new();
    let mut baseline = Vec::new();
    for record in &index.segments {
        let Some(vector) = index.vector.entries.get(&record.key) else {
            continue;
        };
        let group = match by {
            Grouping::Document => record.doc_id.clone(),
            Grouping::SectionTitle if record.segment.title.is_empty() => record.segment.heading(),
            Grouping::SectionTitle => record.segment.title.clone(),
        };
        let plain = embedder.embed(&uncascaded_text(&record.segment))?;
        augmented.push((record.key.clone(), group.clone(), vector.clone()));
        if !is_unembeddable(&plain) {
            baseline.push((record.key.clone(), group, unit(plain)));
        }
    }
    let variants = [variant("augmented", augmented)?, variant("baseline", baseline)?];

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["record", "variant", "group", "key", "x", "y", "count", "mean_pairwise_cosine", "centroid_norm"])?;
    for v in &variants {
        for (group, s) in &v.stats {
            let cohesion = s.mean_pairwise_cosine.map_or_else(|| "undefined".to_owned(), |c| c.to_string());
            csv.write_record([
                "stats",
                v.name,
                group,
                "",
                "",
                "",
                &s.count.to_string(),
                &cohesion,
                &s.centroid_norm.to_string(),
            ])?;
        }
    }
    for v in &variants {
        for row in &v.projection.rows {
            csv.write_record(["coord", v.name, &row.group, &row.key, &row.x.to_string(), &row.y.to_string(), "", "", ""])?;
        }
    }
    let csv = csv.into_inner().map_err(|e| anyhow!("{e}"))?;

    let summary: Vec<String> = variants
        .iter()
        .map(|v| {
            let defined: Vec<f64> = v.stats.values().filter_map(|s| s.mean_pairwise_cosine).collect();
            let mean = if defined.is_empty() {
                "undefined".to_owned()
            } else {
                format!("{:.4}", defined.iter().sum::<f64>() / defined.len() as f64)
            };
            format!(
                "{}: groups={} mean_cohesion={} explained_variance={:.4}",
                v.name,
                v.stats.len(),
                mean,
                v.projection.explained_variance_ratio
            )
        })
        .collect();
    match output {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            for line in summary {
                writeln!(out, "{line}")?;
            }
        }
        None => {
            out.write_all(&csv)?;
            for line in summary {
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}
