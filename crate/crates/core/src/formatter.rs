//! Sliding-window markdown conversion and structural parsing.
//!
//! Long source text is cut into word windows of `W` core words plus `K`
//! padding words on each side. A [`DocumentConverter`] is called once per
//! window, strictly in order, and sees its own window together with the
//! previous window's input and output. Each call returns markdown for the
//! core of its window only; the fragments are concatenated and then split
//! into chapter segments by [`parse_markdown`].

use std::ops::Range;

use crate::corpus::{Segment, SegmentKind};
use crate::error::{Error, Result, Warning};
use crate::text::word_units;

/// Window schedule over a document of `total_words` words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub window_words: usize,
    pub padding_words: usize,
    pub total_words: usize,
    /// Padded word span handed to the converter at each turn.
    pub spans: Vec<Range<usize>>,
}

impl WindowPlan {
    pub fn iterations(&self) -> usize {
        self.spans.len()
    }

    /// Unpadded core of turn `index` (0-based).
    pub fn core(&self, index: usize) -> Range<usize> {
        let start = index * self.window_words;
        start..(start + self.window_words).min(self.total_words)
    }

    pub fn cores(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.iterations()).map(|i| self.core(i))
    }
}

pub fn plan_windows(total_words: usize, window_words: usize, padding_words: usize) -> Result<WindowPlan> {
    if window_words == 0 {
        return Err(Error::invalid("window_words", "window size must be at least 1"));
    }
    let iterations = total_words.div_ceil(window_words);
    let spans = (0..iterations)
        .map(|i| {
            let core_start = i * window_words;
            let start = core_start.saturating_sub(padding_words);
            let end = (core_start + window_words)
                .saturating_add(padding_words)
                .min(total_words);
            start..end
        })
        .collect();
    Ok(WindowPlan {
        window_words,
        padding_words,
        total_words,
        spans,
    })
}

/// Arguments of one converter call.
#[derive(Debug, Clone)]
pub struct ConverterTurn<'a> {
    /// 1-based turn number.
    pub turn: usize,
    pub total_turns: usize,
    /// Padded window text, including the whitespace preceding each word.
    pub current_input: &'a str,
    /// Byte range of the core inside `current_input`. Output must cover only this.
    pub core: Range<usize>,
    /// Window text of the previous turn; empty at turn 1.
    pub previous_input: &'a str,
    /// Fragment returned by the previous turn; empty at turn 1.
    pub previous_output: &'a str,
}

impl<'a> ConverterTurn<'a> {
    pub fn core_text(&self) -> &'a str {
        &self.current_input[self.core.clone()]
    }
}

pub type ConverterError = Box<dyn std::error::Error + Send + Sync>;

/// Turns one window of source text into a markdown fragment.
pub trait DocumentConverter {
    fn convert(&mut self, turn: &ConverterTurn<'_>) -> std::result::Result<String, ConverterError>;
}

impl<F> DocumentConverter for F
where
    F: FnMut(&ConverterTurn<'_>) -> std::result::Result<String, ConverterError>,
{
    fn convert(&mut self, turn: &ConverterTurn<'_>) -> std::result::Result<String, ConverterError> {
        self(turn)
    }
}

/// Echoes the core of each window unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityConverter;

impl DocumentConverter for IdentityConverter {
    fn convert(&mut self, turn: &ConverterTurn<'_>) -> std::result::Result<String, ConverterError> {
        Ok(turn.core_text().to_owned())
    }
}

pub fn convert_document(
    doc_text: &str,
    converter: &mut dyn DocumentConverter,
    plan: &WindowPlan,
) -> Result<String> {
    let units = word_units(doc_text);
    if units.len() != plan.total_words {
        return Err(Error::invalid(
            "plan",
            format!(
                "plan covers {} words but the document has {}",
                plan.total_words,
                units.len()
            ),
        ));
    }

    let mut output = String::with_capacity(doc_text.len());
    let mut previous_input = "";
    let mut previous_output = String::new();
    for (index, span) in plan.spans.iter().enumerate() {
        let core = plan.core(index);
        let window_start = units[span.start].start;
        let window_end = units[span.end - 1].end;
        let current_input = &doc_text[window_start..window_end];
        let turn = ConverterTurn {
            turn: index + 1,
            total_turns: plan.iterations(),
            current_input,
            core: units[core.start].start - window_start..units[core.end - 1].end - window_start,
            previous_input,
            previous_output: &previous_output,
        };
        let fragment = converter.convert(&turn).map_err(|e| Error::Conversion {
            turn: index + 1,
            partial_output: output.clone(),
            message: e.to_string(),
        })?;
        output.push_str(&fragment);
        previous_input = current_input;
        previous_output = fragment;
    }
    Ok(output)
}

/// Deterministic converter that normalizes existing heading conventions to
/// `# <number> <title>` lines.
///
/// * `## Title` markdown headings are numbered from running counters.
/// * `## 3.2 Title` keeps its number and drops the extra markers.
/// * Plain lines such as `3.2 Electrical Characteristics` are promoted.
///
/// Only the first word of a heading line is rewritten, so a heading is decided
/// exactly once: in the turn whose core contains that first word.
#[derive(Debug, Default, Clone)]
pub struct RuleBasedConverter {
    counters: Vec<usize>,
    in_fence: bool,
    /// Fewest `#` markers seen so far; that many count as depth 1.
    top_marker: Option<usize>,
}

/// Longest plain line, in words, that may be promoted to a heading.
const MAX_PLAIN_HEADING_WORDS: usize = 12;

impl RuleBasedConverter {
    pub fn new() -> Self {
        Self::default()
    }

    fn set_number(&mut self, components: &[usize]) {
        self.counters = components.to_vec();
    }

    /// Rewrites the first word of a line, or returns `None` to keep it.
    fn rewrite_line_start(&mut self, line: &[&str]) -> Option<String> {
        let first = line[0];
        if first.starts_with("```") || first.starts_with("~~~") {
            self.in_fence = !self.in_fence;
            return None;
        }
        if self.in_fence {
            return None;
        }
        if !first.is_empty() && first.chars().all(|c| c == '#') {
            let top = self.top_marker.map_or(first.len(), |t| t.min(first.len()));
            self.top_marker = Some(top);
            let level = first.len() - top + 1;
            return match line.get(1).and_then(|w| parse_dotted(w)) {
                Some(components) => {
                    self.set_number(&components);
                    Some("#".to_owned())
                }
                // A broken number such as `2.x` is kept for the parser to flag.
                None if line.get(1).is_some_and(|w| looks_numbered(w)) => Some("#".to_owned()),
                None if line.len() > 1 => Some(format!("# {}", self.next_heading_number(level))),
                None => None,
            };
        }
        if is_plain_numbered_heading(line) {
            let components = parse_dotted(first.trim_end_matches('.'))?;
            self.set_number(&components);
            return Some(format!("# {}", first.trim_end_matches('.')));
        }
        None
    }

    fn next_heading_number(&mut self, level: usize) -> String {
        if self.counters.len() >= level {
            self.counters.truncate(level);
            *self.counters.last_mut().expect("level >= 1") += 1;
        } else {
            while self.counters.len() < level {
                self.counters.push(1);
            }
        }
        self.counters
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(".")
    }
}

fn looks_numbered(word: &str) -> bool {
    word.starts_with(|c: char| c.is_ascii_digit()) && word.contains('.')
}

fn is_plain_numbered_heading(line: &[&str]) -> bool {
    if line.len() < 2 || line.len() > MAX_PLAIN_HEADING_WORDS {
        return false;
    }
    let number = line[0].trim_end_matches('.');
    let Some(components) = parse_dotted(number) else {
        return false;
    };
    if components.iter().any(|&c| c > 999) {
        return false;
    }
    let title = line[1];
    let starts_upper = title.chars().next().is_some_and(char::is_uppercase);
    let alphabetic = title.chars().filter(|c| c.is_alphabetic()).count() >= 2;
    let last = line[line.len() - 1];
    starts_upper && alphabetic && !last.ends_with('.') && !last.ends_with(':') && !last.ends_with(',')
}

/// Parses `"3.2.1"` into `[3, 2, 1]`. A single trailing dot is tolerated.
pub fn parse_dotted(token: &str) -> Option<Vec<usize>> {
    let token = token.strip_suffix('.').unwrap_or(token);
    if token.is_empty() {
        return None;
    }
    token
        .split('.')
        .map(|part| {
            if !part.is_empty() && part.bytes().all(|b| b.is_ascii_digit()) {
                part.parse().ok()
            } else {
                None
            }
        })
        .collect()
}

impl DocumentConverter for RuleBasedConverter {
    fn convert(&mut self, turn: &ConverterTurn<'_>) -> std::result::Result<String, ConverterError> {
        if turn.turn == 1 {
            *self = Self::default();
        }
        let window = turn.current_input;
        let units = word_units(window);
        let mut out = String::with_capacity(turn.core.len() + 16);
        for (i, unit) in units.iter().enumerate() {
            if unit.start < turn.core.start || unit.end > turn.core.end {
                continue;
            }
            let piece = &window[unit.clone()];
            let word_at = piece.len() - piece.trim_start().len();
            let (ws, rest) = piece.split_at(word_at);
            let word_len = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let (word, trailing) = rest.split_at(word_len);

            let line_start = ws.contains('\n') || (turn.turn == 1 && i == 0);
            if line_start {
                let line: Vec<&str> = std::iter::once(word)
                    .chain(
                        units[i + 1..]
                            .iter()
                            .map(|u| &window[u.clone()])
                            .take_while(|p| !p[..p.len() - p.trim_start().len()].contains('\n'))
                            .map(str::trim),
                    )
                    .collect();
                if let Some(replacement) = self.rewrite_line_start(&line) {
                    let ws = ws.rfind('\n').map_or("", |nl| &ws[..=nl]);
                    out.push_str(ws);
                    out.push_str(&replacement);
                    out.push_str(trailing);
                    continue;
                }
            }
            out.push_str(piece);
        }
        Ok(out)
    }
}

/// Segments parsed from one markdown document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedMarkdown {
    pub segments: Vec<Segment>,
    /// Warning contexts are segment ids.
    pub warnings: Vec<Warning>,
}

struct Heading {
    chapter_number: String,
    level: usize,
    title: String,
    malformed: bool,
}

fn parse_heading(rest: &str) -> Heading {
    let rest = rest.trim();
    let (first, title) = match rest.split_once(char::is_whitespace) {
        Some((first, title)) => (first, title.trim()),
        None => (rest, ""),
    };
    if let Some(components) = parse_dotted(first) {
        return Heading {
            chapter_number: first.trim_end_matches('.').to_owned(),
            level: components.len(),
            title: title.to_owned(),
            malformed: false,
        };
    }
    if first.chars().any(|c| c.is_ascii_digit()) {
        Heading {
            chapter_number: first.to_owned(),
            level: 1,
            title: title.to_owned(),
            malformed: true,
        }
    } else {
        Heading {
            chapter_number: String::new(),
            level: 1,
            title: rest.to_owned(),
            malformed: true,
        }
    }
}

fn is_table_caption(line: &str) -> bool {
    let lower = line.to_lowercase();
    let Some(after) = lower.strip_prefix("table") else {
        return false;
    };
    match after.find(':') {
        // "Table:" or "Table 3:" / "Table A.1:"
        Some(colon) => after[..colon].split_whitespace().count() <= 1,
        None => false,
    }
}

fn is_image_reference(line: &str) -> bool {
    line.starts_with("![") && line.contains("](")
}

/// Segment kind implied by the first non-empty content line.
pub fn detect_kind(content: &str) -> SegmentKind {
    match content.lines().map(str::trim).find(|l| !l.is_empty()) {
        Some(line) if line.starts_with('|') || is_table_caption(line) => SegmentKind::Table,
        Some(line) if is_image_reference(line) => SegmentKind::Image,
        _ => SegmentKind::Text,
    }
}

/// Splits markdown into one segment per `# <dotted-number> <title>` heading.
///
/// Text before the first heading becomes a level-0 preamble segment titled
/// with `doc_title`. Headings inside fenced code blocks are ignored.
pub fn parse_markdown(markdown: &str, doc_title: &str) -> ParsedMarkdown {
    struct Open {
        heading: Option<Heading>,
        lines: Vec<String>,
    }

    let mut parsed = ParsedMarkdown::default();
    let mut used_ids = std::collections::BTreeSet::new();
    let mut current = Open {
        heading: None,
        lines: Vec::new(),
    };
    let mut in_fence = false;

    let mut close = |open: Open, parsed: &mut ParsedMarkdown| {
        let content = open.lines.join("\n").trim_end().to_owned();
        let index = parsed.segments.len();
        let (chapter_number, level, title, malformed) = match open.heading {
            None => {
                if content.trim().is_empty() {
                    return;
                }
                (String::new(), 0, doc_title.to_owned(), false)
            }
            Some(h) => (h.chapter_number, h.level, h.title, h.malformed),
        };
        let mut segment_id = if chapter_number.is_empty() || malformed {
            format!("s{index}")
        } else {
            chapter_number.clone()
        };
        while !used_ids.insert(segment_id.clone()) {
            segment_id = format!("{segment_id}~");
        }
        if malformed {
            parsed.warnings.push(Warning::new(
                segment_id.clone(),
                format!("malformed chapter number in heading `{chapter_number} {title}`"),
            ));
        }
        parsed.segments.push(Segment {
            segment_id,
            kind: detect_kind(&content),
            chapter_number,
            level,
            title,
            content,
            embedding_text: String::new(),
            metadata_path: Vec::new(),
        });
    };

    for raw in markdown.split('\n') {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") || trimmed.starts_with("~~~") {
            in_fence = !in_fence;
        }
        if !in_fence {
            if let Some(rest) = line.strip_prefix("# ") {
                let next = Open {
                    heading: Some(parse_heading(rest)),
                    lines: Vec::new(),
                };
                close(std::mem::replace(&mut current, next), &mut parsed);
                continue;
            }
        }
        current.lines.push(line.to_owned());
    }
    close(current, &mut parsed);
    parsed
}
