//! Text normalization and sentence splitting.
//!
//! Normalization follows the usual QA-metric convention: lowercase, strip
//! punctuation, drop English articles, split on whitespace. Hyphens between
//! two alphanumeric characters survive so that scores like `28-24` stay one
//! token.

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::types::Span;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Canonical token sequence used by token-level F1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedTokens(pub Vec<String>);

impl NormalizedTokens {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

/// Unicode punctuation (categories Pc, Pd, Ps, Pe, Pi, Pf, Po).
pub fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

fn is_hyphen(c: char) -> bool {
    matches!(c, '-' | '\u{2010}' | '\u{2011}')
}

/// Lowercases, strips punctuation (except word-internal hyphens), removes
/// articles and splits on whitespace.
pub fn normalize(text: &str) -> NormalizedTokens {
    let lowered: Vec<char> = text.to_lowercase().chars().collect();
    let mut cleaned = String::with_capacity(lowered.len());
    for (i, &c) in lowered.iter().enumerate() {
        if is_punctuation(c) {
            let internal_hyphen = is_hyphen(c)
                && i > 0
                && lowered[i - 1].is_alphanumeric()
                && lowered.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if !internal_hyphen {
                continue;
            }
        }
        cleaned.push(c);
    }
    NormalizedTokens(
        cleaned
            .split_whitespace()
            .filter(|t| !ARTICLES.contains(t))
            .map(str::to_owned)
            .collect(),
    )
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "inc", "ltd", "co", "corp",
    "gen", "gov", "sen", "rep", "rev", "mt", "ft", "no", "jan", "feb", "mar", "apr", "jun", "jul",
    "aug", "sep", "sept", "oct", "nov", "dec", "approx", "dept", "est", "fig", "capt", "lt", "col",
    "sgt", "hon",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\u{2026}')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}' | '\u{00bb}')
}

/// True if the word ending just before a single period is an abbreviation
/// or an initial, so the period does not end the sentence.
fn is_abbreviation(word: &str) -> bool {
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // dotted acronyms: u.s, p.m, e.g
    if lower.contains('.')
        && lower
            .split('.')
            .all(|part| part.chars().count() == 1 && part.chars().all(char::is_alphabetic))
    {
        return true;
    }
    // a single capital letter is an initial ("J. Smith")
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

/// Splits `text` into sentence spans.
///
/// A sentence ends at a run of `.`, `!`, `?` (plus any closing quotes or
/// brackets) followed by whitespace or end of text. A lone period after a
/// known abbreviation, a dotted acronym or a capital initial does not end a
/// sentence. Returned spans are trimmed, disjoint and ordered; the gaps
/// between them are whitespace only.
pub fn split_sentences(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(pos);
        }
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut j = i;
        while j < chars.len() && is_terminal(chars[j].1) {
            j += 1;
        }
        let run_len = j - run_start;
        while j < chars.len() && is_closing(chars[j].1) {
            j += 1;
        }
        let at_break = j == chars.len() || chars[j].1.is_whitespace();
        if !at_break {
            i = j;
            continue;
        }
        let mut boundary = true;
        if run_len == 1 && chars[run_start].1 == '.' && j < chars.len() {
            let word_start = chars[..run_start]
                .iter()
                .rposition(|(_, ch)| ch.is_whitespace())
                .map_or(0, |k| k + 1);
            let word_from = chars.get(word_start).map_or(pos, |(p, _)| *p);
            if is_abbreviation(&text[word_from..pos]) {
                boundary = false;
            }
        }
        if boundary {
            let end = chars.get(j).map_or(text.len(), |(p, _)| *p);
            spans.push(Span::new(start.take().unwrap_or(pos), end));
        }
        i = j;
    }
    if let Some(s) = start {
        let end = s + text[s..].trim_end().len();
        if end > s {
            spans.push(Span::new(s, end));
        }
    }
    spans
}

/// All (possibly overlapping) case-insensitive occurrences of `needle`.
pub fn find_case_insensitive(haystack: &str, needle: &str) -> Vec<Span> {
    let pattern: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    if pattern.is_empty() {
        return Vec::new();
    }
    let mut hits = Vec::new();
    for (start, _) in haystack.char_indices() {
        let mut k = 0;
        'scan: for (off, c) in haystack[start..].char_indices() {
            for lc in c.to_lowercase() {
                if k < pattern.len() && pattern[k] == lc {
                    k += 1;
                } else {
                    break 'scan;
                }
            }
            if k == pattern.len() {
                hits.push(Span::new(start, start + off + c.len_utf8()));
                break;
            }
        }
    }
    hits
}

pub fn contains_case_insensitive(haystack: &str, needle: &str) -> bool {
    let pattern: String = needle.to_lowercase();
    !pattern.is_empty() && haystack.to_lowercase().contains(&pattern)
}

/// Index of the sentence containing `offset`, if any.
pub fn sentence_of(sentences: &[Span], offset: usize) -> Option<usize> {
    sentences
        .iter()
        .position(|s| s.start <= offset && offset < s.end)
}
