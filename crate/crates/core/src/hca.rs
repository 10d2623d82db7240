//! Chapter hierarchy and cascading metadata augmentation.
//!
//! Every segment's embedding text is prefixed with the path of titles from
//! the document root down to the segment, so structurally identical chapters
//! of different documents no longer embed identically. Tables are projected
//! onto their labels and images are replaced by textual descriptions before
//! embedding; the original content is kept for answer context.

use crate::corpus::{DocumentRecord, ImageAsset, Segment, SegmentKind};
use crate::error::Warning;
use crate::formatter::parse_dotted;

/// Delimiter between metadata path entries.
pub const PATH_DELIMITER: &str = " > ";

/// Default number of words of surrounding text attached to image descriptions.
pub const IMAGE_CONTEXT_WORDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub segment: Segment,
    /// Index of the parent node, `None` when attached to the root.
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Chapter tree of one document; the root holds the document title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentTree {
    pub doc_id: String,
    pub title: String,
    /// Nodes in original document order.
    pub nodes: Vec<TreeNode>,
    pub root_children: Vec<usize>,
    pub images: Vec<ImageAsset>,
}

impl SegmentTree {
    /// Pre-order walk from the root.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<usize> = self.root_children.iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            order.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        order
    }
}

fn is_proper_prefix(prefix: &[usize], of: &[usize]) -> bool {
    prefix.len() < of.len() && of.starts_with(prefix)
}

/// Attaches each chapter under the deepest open ancestor whose number is a
/// prefix of its own. Gaps in the numbering bridge to that ancestor, and
/// chapters without a usable number attach to the root.
pub fn build_tree(doc: &DocumentRecord) -> SegmentTree {
    let mut nodes: Vec<TreeNode> = Vec::with_capacity(doc.segments.len());
    let mut root_children = Vec::new();
    // Open path from the root: (node index, chapter components).
    let mut open: Vec<(usize, Vec<usize>)> = Vec::new();

    for segment in &doc.segments {
        let index = nodes.len();
        let number = if segment.is_preamble() {
            None
        } else {
            parse_dotted(&segment.chapter_number)
        };
        let parent = match &number {
            Some(components) => {
                while open
                    .last()
                    .is_some_and(|(_, prefix)| !is_proper_prefix(prefix, components))
                {
                    open.pop();
                }
                open.last().map(|(n, _)| *n)
            }
            None => {
                open.clear();
                None
            }
        };
        match parent {
            Some(p) => nodes[p].children.push(index),
            None => root_children.push(index),
        }
        if let Some(components) = number {
            open.push((index, components));
        }
        nodes.push(TreeNode {
            segment: segment.clone(),
            parent,
            children: Vec::new(),
        });
    }

    SegmentTree {
        doc_id: doc.doc_id.clone(),
        title: doc.title.clone(),
        nodes,
        root_children,
        images: doc.images.clone(),
    }
}

/// Produces a textual description of an image.
pub trait Captioner {
    fn caption(
        &self,
        file_ref: &str,
        context: &str,
    ) -> Result<String, Box<dyn std::error::Error + Send + Sync>>;
}

#[derive(Clone, Copy)]
pub struct AugmentOptions<'a> {
    /// Prefix embedding text with the metadata path. When off, the segment's
    /// own heading line is used instead, which is what a plain chunker sees.
    pub cascade: bool,
    /// Drop table data fields from the embedding text.
    pub table_projection: bool,
    pub image_context_words: usize,
    pub captioner: Option<&'a dyn Captioner>,
}

impl Default for AugmentOptions<'_> {
    fn default() -> Self {
        Self {
            cascade: true,
            table_projection: true,
            image_context_words: IMAGE_CONTEXT_WORDS,
            captioner: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Augmented {
    pub segments: Vec<Segment>,
    pub warnings: Vec<Warning>,
}

pub fn serialize_path(path: &[String]) -> String {
    path.join(PATH_DELIMITER)
}

/// Fills `metadata_path` and `embedding_text` of every segment in the tree.
///
/// Segments that cannot be described (images with neither a description nor a
/// captioner) keep an empty embedding text and produce a warning.
pub fn cascade_metadata(tree: &SegmentTree, options: &AugmentOptions<'_>) -> Augmented {
    let mut paths: Vec<Vec<String>> = vec![Vec::new(); tree.nodes.len()];
    let mut out = Augmented::default();

    for index in tree.preorder() {
        let node = &tree.nodes[index];
        let mut path = match node.parent {
            Some(p) => paths[p].clone(),
            None => vec![tree.title.clone()],
        };
        if !node.segment.is_preamble() {
            path.push(node.segment.heading());
        }
        paths[index] = path;
    }

    for (index, node) in tree.nodes.iter().enumerate() {
        let mut segment = node.segment.clone();
        segment.metadata_path = std::mem::take(&mut paths[index]);
        let context = format!("{}#{}", tree.doc_id, segment.segment_id);

        let body = match segment.kind {
            SegmentKind::Text => Some(segment.content.clone()),
            SegmentKind::Table if options.table_projection => Some(augment_table(&segment)),
            SegmentKind::Table => Some(segment.content.clone()),
            SegmentKind::Image => {
                let (asset, surrounding) = image_for(&segment, &tree.images, options.image_context_words);
                match augment_image(&asset, &surrounding, options.captioner) {
                    Ok((text, warning)) => {
                        if let Some(message) = warning {
                            out.warnings.push(Warning::new(context.clone(), message));
                        }
                        Some(text)
                    }
                    Err(message) => {
                        out.warnings.push(Warning::new(context.clone(), message));
                        None
                    }
                }
            }
        };

        segment.embedding_text = match body {
            None => String::new(),
            Some(body) => {
                let prefix = if options.cascade {
                    serialize_path(&segment.metadata_path)
                } else if segment.is_preamble() {
                    String::new()
                } else {
                    segment.heading()
                };
                match (prefix.is_empty(), body.is_empty()) {
                    (true, _) => body,
                    (false, true) => prefix,
                    (false, false) => format!("{prefix}\n{body}"),
                }
            }
        };
        out.segments.push(segment);
    }
    out
}

/// Embedding text an augmented segment would have had without cascading:
/// its own heading over the same body. Text that does not carry the cascaded
/// prefix is returned unchanged.
pub fn uncascaded_text(segment: &Segment) -> String {
    let prefix = serialize_path(&segment.metadata_path);
    if prefix.is_empty() {
        return segment.embedding_text.clone();
    }
    let body = if segment.embedding_text == prefix {
        ""
    } else if let Some(body) = segment.embedding_text.strip_prefix(&format!("{prefix}\n")) {
        body
    } else {
        return segment.embedding_text.clone();
    };
    let heading = if segment.is_preamble() { String::new() } else { segment.heading() };
    match (heading.is_empty(), body.is_empty()) {
        (true, _) => body.to_owned(),
        (false, true) => heading,
        (false, false) => format!("{heading}\n{body}"),
    }
}

/// Augments every document, returning them with embedding text filled in.
pub fn augment_documents(
    docs: &[DocumentRecord],
    options: &AugmentOptions<'_>,
) -> (Vec<DocumentRecord>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let docs = docs
        .iter()
        .map(|doc| {
            let augmented = cascade_metadata(&build_tree(doc), options);
            warnings.extend(augmented.warnings);
            DocumentRecord {
                segments: augmented.segments,
                ..doc.clone()
            }
        })
        .collect();
    (docs, warnings)
}

fn split_row(line: &str) -> Vec<&str> {
    let inner = line.trim();
    let inner = inner.strip_prefix('|').unwrap_or(inner);
    let inner = inner.strip_suffix('|').unwrap_or(inner);
    inner.split('|').map(str::trim).collect()
}

fn is_separator_row(cells: &[&str]) -> bool {
    !cells.is_empty()
        && cells.iter().all(|c| {
            let c = c.trim_matches(':');
            !c.is_empty() && c.chars().all(|ch| ch == '-')
        })
}

fn is_numeric_cell(cell: &str) -> bool {
    let mut digits = 0;
    for c in cell.chars() {
        if c.is_ascii_digit() {
            digits += 1;
        } else if !matches!(c, '+' | '-' | '.' | ',' | '%' | ' ' | '~' | '±' | '−') {
            return false;
        }
    }
    digits > 0
}

/// Embedding text of a table segment: caption and description lines, the
/// header row, and the first column's row labels. Data cells are dropped;
/// the segment content itself is left untouched.
pub fn augment_table(segment: &Segment) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut block: Vec<Vec<&str>> = Vec::new();

    fn flush(block: &mut Vec<Vec<&str>>, out: &mut Vec<String>) {
        if block.is_empty() {
            return;
        }
        let has_header = block.len() >= 2 && is_separator_row(&block[1]);
        let (header, body) = if has_header {
            (Some(&block[0]), &block[2..])
        } else {
            (None, &block[..])
        };
        if let Some(header) = header {
            let cells: Vec<&str> = header.iter().copied().filter(|c| !c.is_empty()).collect();
            if !cells.is_empty() {
                out.push(cells.join(" "));
            }
        }
        let labels: Vec<&str> = body
            .iter()
            .filter(|row| !is_separator_row(row))
            .filter_map(|row| row.first().copied())
            .filter(|c| !c.is_empty() && !is_numeric_cell(c))
            .collect();
        if !labels.is_empty() {
            out.push(labels.join(" "));
        }
        block.clear();
    }

    for line in segment.content.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('|') {
            block.push(split_row(trimmed));
        } else {
            flush(&mut block, &mut out);
            if !trimmed.is_empty() {
                out.push(trimmed.to_owned());
            }
        }
    }
    flush(&mut block, &mut out);
    out.join("\n")
}

/// Parses `![alt](file)` at the start of a line.
fn image_reference(line: &str) -> Option<(&str, &str)> {
    let rest = line.trim().strip_prefix("![")?;
    let (alt, rest) = rest.split_once("](")?;
    let (file, _) = rest.split_once(')')?;
    Some((alt, file.split_whitespace().next().unwrap_or("")))
}

/// Resolves the asset referenced by an image segment together with the
/// surrounding text window. Unlisted images fall back to their alt text.
fn image_for(segment: &Segment, assets: &[ImageAsset], context_words: usize) -> (ImageAsset, String) {
    let mut reference = None;
    let mut surrounding = Vec::new();
    for line in segment.content.lines() {
        match image_reference(line) {
            Some(r) if reference.is_none() => reference = Some(r),
            Some(_) => {}
            None => surrounding.extend(line.split_whitespace()),
        }
    }
    surrounding.truncate(context_words);
    let (alt, file) = reference.unwrap_or(("", ""));
    let asset = assets
        .iter()
        .find(|a| a.file_ref == file || (!alt.is_empty() && a.image_id == alt))
        .cloned()
        .unwrap_or_else(|| ImageAsset {
            image_id: alt.to_owned(),
            file_ref: file.to_owned(),
            description: alt.to_owned(),
        });
    (asset, surrounding.join(" "))
}

/// Embedding text of an image: its description, any captioner output, then
/// the surrounding text.
///
/// Returns the text and an optional warning, or an error message when the
/// image has neither a description nor a working captioner.
pub fn augment_image(
    asset: &ImageAsset,
    surrounding_text: &str,
    captioner: Option<&dyn Captioner>,
) -> Result<(String, Option<String>), String> {
    let mut description = asset.description.trim().to_owned();
    let mut warning = None;
    if let Some(captioner) = captioner {
        match captioner.caption(&asset.file_ref, surrounding_text) {
            Ok(caption) if !caption.trim().is_empty() => {
                if !description.is_empty() {
                    description.push(' ');
                }
                description.push_str(caption.trim());
            }
            Ok(_) => {}
            Err(e) => warning = Some(format!("captioner failed for `{}`: {e}", asset.file_ref)),
        }
    }
    if description.is_empty() {
        return Err(format!(
            "image `{}` has no description; excluded from the vector index",
            asset.file_ref
        ));
    }
    let text = if surrounding_text.trim().is_empty() {
        description
    } else {
        format!("{description}\n{}", surrounding_text.trim())
    };
    Ok((text, warning))
}
