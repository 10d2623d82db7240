//! Critical keyword extraction and the per-segment keyword table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Extracts case-folded critical keywords (entity names, part numbers) from text.
pub trait KeywordExtractor {
    fn extract(&self, text: &str) -> Result<BTreeSet<String>>;
}

/// Whitespace tokens, stripped of surrounding punctuation, that contain both
/// a letter and a digit (`CA-IS3641`, `iPhone15`, `TPS7A47`).
#[derive(Debug, Default, Clone, Copy)]
pub struct PartNumberExtractor;

impl KeywordExtractor for PartNumberExtractor {
    fn extract(&self, text: &str) -> Result<BTreeSet<String>> {
        Ok(text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
            .filter(|w| w.chars().any(char::is_alphabetic) && w.chars().any(|c| c.is_numeric()))
            .map(str::to_lowercase)
            .collect())
    }
}

/// True when `keyword` occurs in `haystack` delimited by non-alphanumerics.
fn contains_term(haystack: &str, keyword: &str) -> bool {
    if keyword.is_empty() {
        return false;
    }
    haystack.match_indices(keyword).any(|(at, m)| {
        let before = haystack[..at].chars().next_back();
        let after = haystack[at + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Extractor output plus every dictionary keyword present in `text`.
pub fn extract_keywords(
    text: &str,
    extractor: &dyn KeywordExtractor,
    user_keywords: &BTreeSet<String>,
) -> Result<BTreeSet<String>> {
    let mut found: BTreeSet<String> = extractor
        .extract(text)?
        .into_iter()
        .map(|k| k.to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    let folded = text.to_lowercase();
    for keyword in user_keywords {
        let keyword = keyword.trim().to_lowercase();
        if contains_term(&folded, &keyword) {
            found.insert(keyword);
        }
    }
    Ok(found)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTable {
    /// Every indexed segment key, including those with no keywords.
    pub keywords: BTreeMap<String, BTreeSet<String>>,
}

impl KeywordTable {
    pub fn build<'a, I>(docs: I, extractor: &dyn KeywordExtractor, dictionary: &BTreeSet<String>) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut keywords = BTreeMap::new();
        for (key, text) in docs {
            keywords.insert(key.to_owned(), extract_keywords(text, extractor, dictionary)?);
        }
        Ok(Self { keywords })
    }
}
