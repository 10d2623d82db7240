//! Deterministic corpora of structurally identical product datasheets.
//!
//! Every document has the same ten sections with the same bodies; only the
//! part number in the document title tells them apart. Queries name a part and
//! a section, so answering them needs the title path.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::corpus::{segment_source, DocumentRecord, SegmentationOptions, SourceDocument};
use crate::error::{Error, Result};
use crate::evalkit::EvalQuery;

pub const SECTION_TITLES: [&str; 10] = [
    "Features",
    "Applications",
    "Description",
    "Pin Configuration",
    "Absolute Maximum Ratings",
    "Electrical Characteristics",
    "Typical Characteristics",
    "Detailed Description",
    "Layout Guidelines",
    "Package Information",
];

/// Chapter number of the section holding the numeric table.
pub const TABLE_SECTION: usize = 6;

/// Row labels of the numeric table.
pub const TABLE_LABELS: [&str; 5] = [
    "Supply voltage",
    "Quiescent current",
    "Output noise",
    "Dropout voltage",
    "Thermal resistance",
];

const PREFIXES: [&str; 4] = ["CA-IS", "TPS", "LMR", "ADP"];

const BODIES: [&str; 10] = [
    "Wide input range with low standby draw.\nIntegrated soft start and overcurrent protection.\nStable with small ceramic capacitors.",
    "Industrial automation modules.\nPortable medical instruments.\nBattery powered sensor nodes and telecom line cards.",
    "The device regulates a single rail from an unregulated source. It pairs a precision reference with an error amplifier and a pass element sized for continuous load.",
    "The package exposes input, output, ground, enable and feedback terminals. The exposed pad must connect to ground.",
    "Stresses beyond these limits may cause permanent damage. Functional operation is only implied at the recommended conditions.",
    "Table 1: Electrical characteristics at ambient temperature\n| Parameter | Min | Typ | Max | Unit |\n|---|---|---|---|---|\n| Supply voltage | 2.7 | 3.3 | 5.5 | V |\n| Quiescent current | 12 | 18 | 25 | uA |\n| Output noise | 4 | 6 | 9 | uVrms |\n| Dropout voltage | 90 | 140 | 210 | mV |\n| Thermal resistance | 38 | 45 | 52 | C/W |",
    "Curves show efficiency against load, line regulation across temperature and startup waveforms for a resistive load.",
    "An internal oscillator sets the switching cadence. The control loop compensates internally and tracks the enable ramp during startup.",
    "Place input capacitors close to the supply pin. Keep the feedback trace short and away from switching nodes. Use wide copper pours for heat spreading.",
    "Orderable devices ship in tape and reel. Mechanical drawings list body size, lead pitch and recommended land pattern.",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticDocument {
    /// File stem, also the document id once loaded.
    pub stem: String,
    pub part: String,
    pub title: String,
    pub markdown: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub documents: Vec<SyntheticDocument>,
    pub queries: Vec<EvalQuery>,
}

/// Part number of document `i`; distinct for every `i`.
pub fn part_number(i: usize) -> String {
    format!("{}{}", PREFIXES[i % PREFIXES.len()], 3011 + 37 * i)
}

/// `docs` datasheets and `queries` part-and-section queries cycling over them.
pub fn datasheet_corpus(docs: usize, queries: usize) -> SyntheticCorpus {
    let documents: Vec<SyntheticDocument> = (0..docs)
        .map(|i| {
            let part = part_number(i);
            let mut markdown = String::new();
            for (s, (title, body)) in SECTION_TITLES.iter().zip(BODIES).enumerate() {
                markdown.push_str(&format!("# {} {title}\n{body}\n\n", s + 1));
            }
            SyntheticDocument {
                stem: part.to_lowercase(),
                title: format!("{part} Datasheet"),
                part,
                markdown,
            }
        })
        .collect();

    let queries = if docs == 0 {
        Vec::new()
    } else {
        (0..queries)
            .map(|q| {
                let doc = &documents[q % docs];
                let section = (3 * q + q / docs) % SECTION_TITLES.len();
                EvalQuery {
                    query_id: format!("q{:03}", q + 1),
                    query: format!("{} {}", doc.part, SECTION_TITLES[section]),
                    relevant_keys: BTreeSet::from([format!("{}#{}", doc.stem, section + 1)]),
                    user_keywords: BTreeSet::new(),
                }
            })
            .collect()
    };
    SyntheticCorpus { documents, queries }
}

impl SyntheticCorpus {
    /// Writes `<stem>.md` plus a `<stem>.meta.json` title sidecar per document.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let write = |path: &Path, body: &str| {
            fs::write(path, body).map_err(|source| Error::Write {
                path: path.to_owned(),
                source,
            })
        };
        fs::create_dir_all(dir).map_err(|source| Error::Write {
            path: dir.to_owned(),
            source,
        })?;
        for doc in &self.documents {
            write(&dir.join(format!("{}.md", doc.stem)), &doc.markdown)?;
            let meta = serde_json::json!({ "title": doc.title });
            write(&dir.join(format!("{}.meta.json", doc.stem)), &format!("{meta}\n"))?;
        }
        Ok(())
    }

    /// Question bank in JSONL form.
    pub fn question_bank(&self) -> String {
        self.queries
            .iter()
            .map(|q| serde_json::to_string(q).expect("queries serialize") + "\n")
            .collect()
    }

    /// Segments the documents in memory, as loading them from disk would.
    pub fn records(&self) -> Result<Vec<DocumentRecord>> {
        self.documents
            .iter()
            .map(|doc| {
                let source = SourceDocument {
                    doc_id: doc.stem.clone(),
                    title: doc.title.clone(),
                    source_path: format!("{}.md", doc.stem).into(),
                    text: doc.markdown.clone(),
                    images: Vec::new(),
                };
                segment_source(source, &mut SegmentationOptions::default())
            })
            .collect()
    }

    /// The first `docs` documents and the queries that target them.
    pub fn truncated(&self, docs: usize) -> Self {
        let documents: Vec<_> = self.documents.iter().take(docs).cloned().collect();
        let kept: BTreeSet<&str> = documents.iter().map(|d| d.stem.as_str()).collect();
        let queries = self
            .queries
            .iter()
            .filter(|q| {
                q.relevant_keys
                    .iter()
                    .all(|k| kept.contains(k.split('#').next().unwrap_or_default()))
            })
            .cloned()
            .collect();
        Self { documents, queries }
    }
}
