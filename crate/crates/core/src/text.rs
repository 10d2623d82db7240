//! Tokenization shared by the windowing, indexing and keyword code paths.

use std::ops::Range;

/// Case-folded runs of Unicode alphanumeric characters.
///
/// `"CA-IS3641 driver"` yields `["ca", "is3641", "driver"]`.
pub fn index_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Byte ranges of whitespace-delimited words, each extended to cover the
/// whitespace that precedes it.
///
/// Trailing whitespace after the last word is attached to the last unit, so
/// concatenating every unit reproduces `text` exactly. Text with no words
/// yields no units.
pub fn word_units(text: &str) -> Vec<Range<usize>> {
    let mut starts = Vec::new();
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            starts.push(i);
        }
    }
    let mut units = Vec::with_capacity(starts.len());
    for (n, &start) in starts.iter().enumerate() {
        let unit_start = if n == 0 { 0 } else { units_end(&starts, n - 1, text) };
        let unit_end = if n + 1 == starts.len() {
            text.len()
        } else {
            units_end(&starts, n, text)
        };
        debug_assert!(unit_start <= start);
        units.push(unit_start..unit_end);
    }
    units
}

/// End of the word starting at `starts[n]` (start of the whitespace after it).
fn units_end(starts: &[usize], n: usize, text: &str) -> usize {
    let from = starts[n];
    text[from..]
        .char_indices()
        .find(|(_, c)| c.is_whitespace())
        .map_or(text.len(), |(i, _)| from + i)
}

/// Number of whitespace-delimited words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
