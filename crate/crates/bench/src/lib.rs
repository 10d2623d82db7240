//! Fixtures shared by the benchmarks.

use std::collections::BTreeSet;

use strata_core::hca::{augment_documents, AugmentOptions};
use strata_core::index::{build_indices, HashingEmbedder, IndexParams, IndexSet, PartNumberExtractor};
use strata_core::synthetic::{datasheet_corpus, SyntheticCorpus};
use strata_core::DocumentRecord;

pub struct Fixture {
    pub corpus: SyntheticCorpus,
    pub docs: Vec<DocumentRecord>,
    pub index: IndexSet,
}

/// Augmented and indexed datasheet corpus with `docs` documents.
pub fn fixture(docs: usize, queries: usize) -> Fixture {
    let corpus = datasheet_corpus(docs, queries);
    let records = corpus.records().expect("synthetic corpus segments");
    let (docs, _) = augment_documents(&records, &AugmentOptions::default());
    let (index, _) = build_indices(
        &docs,
        &HashingEmbedder::default(),
        &PartNumberExtractor,
        &BTreeSet::new(),
        IndexParams::default(),
    )
    .expect("synthetic corpus indexes");
    Fixture { corpus, docs, index }
}
