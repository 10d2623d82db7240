//! Document and segment data model, and corpus loading from disk.
//!
//! A corpus is a directory tree of `.md` / `.txt` files. Each file may have a
//! `<stem>.meta.json` sidecar next to it:
//!
//! ```json
//! {"title": "CA-IS3641 Datasheet",
//!  "images": [{"id": "img1", "file": "p3.png", "description": "pinout diagram"}]}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result, Warning};
use crate::formatter::{self, DocumentConverter, RuleBasedConverter};

const SIDECAR_SUFFIX: &str = ".meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Text,
    Table,
    Image,
}

/// One chapter-level knowledge unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    /// Dotted chapter number such as `"3.2.1"`; empty for the preamble.
    pub chapter_number: String,
    pub level: usize,
    pub title: String,
    pub kind: SegmentKind,
    /// Full original content, excluding the heading line.
    pub content: String,
    /// Text handed to the embedder and the lexical index. Empty until augmented,
    /// and left empty for segments that cannot be embedded.
    pub embedding_text: String,
    /// Root-to-node title path. Empty until augmented.
    pub metadata_path: Vec<String>,
}

impl Segment {
    /// The heading line as written in the markdown, without the `# ` marker.
    pub fn heading(&self) -> String {
        match (self.chapter_number.is_empty(), self.title.is_empty()) {
            (true, _) => self.title.clone(),
            (false, true) => self.chapter_number.clone(),
            (false, false) => format!("{} {}", self.chapter_number, self.title),
        }
    }

    pub fn is_preamble(&self) -> bool {
        self.level == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAsset {
    #[serde(rename = "id")]
    pub image_id: String,
    #[serde(rename = "file")]
    pub file_ref: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub title: String,
    pub source_path: PathBuf,
    pub segments: Vec<Segment>,
    pub images: Vec<ImageAsset>,
    /// Non-fatal parse conditions, e.g. malformed heading numbers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

/// Globally unique key of a segment: `doc_id#segment_id`.
pub fn segment_key(doc_id: &str, segment_id: &str) -> String {
    format!("{doc_id}#{segment_id}")
}

impl DocumentRecord {
    pub fn key_of(&self, segment: &Segment) -> String {
        segment_key(&self.doc_id, &segment.segment_id)
    }
}

#[derive(Debug, Default, Deserialize)]
struct Sidecar {
    title: Option<String>,
    #[serde(default)]
    images: Vec<ImageAsset>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    path: PathBuf,
    title: Option<String>,
    #[serde(default)]
    images: Vec<ImageAsset>,
}

/// Title and images a manifest assigns to one file.
type ManifestOverrides = (Option<String>, Vec<ImageAsset>);

#[derive(Debug, Deserialize)]
struct Manifest {
    documents: Vec<ManifestEntry>,
}

/// A document file read from disk, before segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    pub source_path: PathBuf,
    pub text: String,
    pub images: Vec<ImageAsset>,
}

/// Settings for turning source text into segments.
pub struct SegmentationOptions<'a> {
    pub window_words: usize,
    pub padding_words: usize,
    /// Converter used per window; `None` selects [`RuleBasedConverter`].
    pub converter: Option<&'a mut dyn DocumentConverter>,
}

impl Default for SegmentationOptions<'_> {
    fn default() -> Self {
        Self {
            window_words: 400,
            padding_words: 50,
            converter: None,
        }
    }
}

fn is_document_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name.ends_with(SIDECAR_SUFFIX) {
        return false;
    }
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("md" | "txt" | "markdown")
    )
}

/// Document id derived from the path relative to the corpus root, without extension.
fn doc_id_for(relative: &Path) -> String {
    let stem = relative.with_extension("");
    stem.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|e| Error::Read {
        path: path.to_owned(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

/// Reads every document file under `root` (or only those listed in `manifest`),
/// sorted by path.
pub fn load_sources(root: &Path, manifest: Option<&Path>) -> Result<Vec<SourceDocument>> {
    if !root.is_dir() {
        return Err(Error::Read {
            path: root.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }

    // relative path -> (title override, images override)
    let mut listed: Option<BTreeMap<PathBuf, ManifestOverrides>> = None;
    if let Some(manifest_path) = manifest {
        let m: Manifest = read_json(manifest_path)?;
        listed = Some(
            m.documents
                .into_iter()
                .map(|e| (e.path, (e.title, e.images)))
                .collect(),
        );
    }

    let mut files: Vec<PathBuf> = match &listed {
        Some(entries) => entries.keys().map(|rel| root.join(rel)).collect(),
        None => {
            let mut found = Vec::new();
            for entry in WalkDir::new(root).sort_by_file_name() {
                let entry = entry.map_err(|e| Error::Read {
                    path: e.path().map(Path::to_owned).unwrap_or_else(|| root.to_owned()),
                    source: e.into(),
                })?;
                if entry.file_type().is_file() && is_document_file(entry.path()) {
                    found.push(entry.into_path());
                }
            }
            found
        }
    };
    files.sort();

    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut docs = Vec::with_capacity(files.len());
    for path in files {
        let relative = path.strip_prefix(root).unwrap_or(&path).to_owned();
        let doc_id = doc_id_for(&relative);
        if let Some(first) = seen.get(&doc_id) {
            return Err(Error::DuplicateDocument {
                doc_id,
                first: first.clone(),
                second: path,
            });
        }
        seen.insert(doc_id.clone(), path.clone());

        let text = read_text(&path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let sidecar_path = path.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"));
        let mut sidecar = if sidecar_path.is_file() {
            read_json::<Sidecar>(&sidecar_path)?
        } else {
            Sidecar::default()
        };
        if let Some((title, images)) = listed.as_ref().and_then(|l| l.get(&relative)) {
            if title.is_some() {
                sidecar.title = title.clone();
            }
            if !images.is_empty() {
                sidecar.images = images.clone();
            }
        }

        docs.push(SourceDocument {
            doc_id,
            title: sidecar.title.unwrap_or(stem),
            source_path: path,
            text,
            images: sidecar.images,
        });
    }
    Ok(docs)
}

/// Converts and parses one source document into a record with segments.
pub fn segment_source(
    source: SourceDocument,
    options: &mut SegmentationOptions<'_>,
) -> Result<DocumentRecord> {
    let plan = formatter::plan_windows(
        crate::text::word_count(&source.text),
        options.window_words,
        options.padding_words,
    )?;
    let markdown = match options.converter.as_deref_mut() {
        Some(converter) => formatter::convert_document(&source.text, converter, &plan)?,
        None => formatter::convert_document(&source.text, &mut RuleBasedConverter::new(), &plan)?,
    };
    let parsed = formatter::parse_markdown(&markdown, &source.title);
    Ok(DocumentRecord {
        warnings: parsed
            .warnings
            .into_iter()
            .map(|w| Warning::new(format!("{}#{}", source.doc_id, w.context), w.message))
            .collect(),
        doc_id: source.doc_id,
        title: source.title,
        source_path: source.source_path,
        segments: parsed.segments,
        images: source.images,
    })
}

/// Loads a corpus with the default window settings and rule-based converter.
pub fn load_corpus(root: &Path, manifest: Option<&Path>) -> Result<Vec<DocumentRecord>> {
    load_corpus_with(root, manifest, &mut SegmentationOptions::default())
}

pub fn load_corpus_with(
    root: &Path,
    manifest: Option<&Path>,
    options: &mut SegmentationOptions<'_>,
) -> Result<Vec<DocumentRecord>> {
    load_sources(root, manifest)?
        .into_iter()
        .map(|source| segment_source(source, options))
        .collect()
}
