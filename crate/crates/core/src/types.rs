//! Shared data model: evaluation units and factual factors.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;

use crate::error::Error;

/// A half-open `[start, end)` byte range into a UTF-8 string.
///
/// Offsets always fall on `char` boundaries. For ASCII text byte offsets and
/// character offsets coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// True when the two spans share at least one offset.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// One (document, summary) pair to be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalUnit {
    pub id: String,
    pub document: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_summary: Option<String>,
}

impl EvalUnit {
    pub fn new(id: impl Into<String>, document: impl Into<String>, summary: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            document: document.into(),
            summary: summary.into(),
            human_score: None,
            gold_summary: None,
        }
    }

    pub fn with_human_score(mut self, score: f64) -> Self {
        self.human_score = Some(score);
        self
    }

    pub fn with_gold_summary(mut self, gold: impl Into<String>) -> Self {
        self.gold_summary = Some(gold.into());
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.document.trim().is_empty() {
            return Err(Error::InvalidUnit {
                id: self.id.clone(),
                reason: "document is empty".into(),
            });
        }
        if self.summary.trim().is_empty() {
            return Err(Error::InvalidUnit {
                id: self.id.clone(),
                reason: "summary is empty".into(),
            });
        }
        if let Some(h) = self.human_score {
            if !(0.0..=1.0).contains(&h) || h.is_nan() {
                return Err(Error::InvalidUnit {
                    id: self.id.clone(),
                    reason: format!("human_score {h} outside [0,1]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    NamedEntity,
    NounPhrase,
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorKind::NamedEntity => f.write_str("named_entity"),
            FactorKind::NounPhrase => f.write_str("noun_phrase"),
        }
    }
}

/// A checkable unit of fact in a summary: a named entity or noun phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactualFactor {
    pub index: usize,
    pub span: Span,
    pub surface: String,
    pub kind: FactorKind,
    pub sentence_index: usize,
}

/// Checks the structural invariants of a factor list extracted from `summary`.
pub fn check_factors(summary: &str, factors: &[FactualFactor]) -> Result<(), String> {
    for (i, f) in factors.iter().enumerate() {
        if f.index != i {
            return Err(format!("factor {i} carries index {}", f.index));
        }
        if f.span.is_empty() || f.span.end > summary.len() {
            return Err(format!("factor {i} span {} out of bounds", f.span));
        }
        if summary.get(f.span.range()) != Some(f.surface.as_str()) {
            return Err(format!("factor {i} surface does not match summary text"));
        }
        if i > 0 {
            let prev = &factors[i - 1];
            if prev.span.start >= f.span.start {
                return Err(format!("factor {i} out of reading order"));
            }
            if prev.span.overlaps(&f.span) {
                return Err(format!("factors {} and {i} overlap", i - 1));
            }
        }
    }
    Ok(())
}
