//! Factual-factor extraction.
//!
//! Extractors are plugins that turn a summary into raw named-entity and
//! noun-phrase spans. [`resolve_overlaps`] turns those (possibly overlapping)
//! spans into the final, disjoint list of [`FactualFactor`]s.

mod command;
mod rules;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::text::split_sentences;
use crate::types::{FactorKind, FactualFactor, Span};

pub use command::CommandExtractor;
pub use rules::RuleExtractor;

pub type PluginError = Box<dyn std::error::Error + Send + Sync>;

/// A span proposed by an extractor, before overlap resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSpan {
    pub span: Span,
    pub surface: String,
    pub kind: FactorKind,
    pub label: String,
}

impl RawSpan {
    pub fn new(text: &str, span: Span, kind: FactorKind, label: impl Into<String>) -> Self {
        Self {
            span,
            surface: text[span.range()].to_owned(),
            kind,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub plugin_name: String,
    #[serde(default)]
    pub options: BTreeMap<String, String>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            plugin_name: RuleExtractor::NAME.to_owned(),
            options: BTreeMap::new(),
        }
    }
}

impl ExtractorConfig {
    pub fn named(plugin_name: impl Into<String>) -> Self {
        Self {
            plugin_name: plugin_name.into(),
            options: BTreeMap::new(),
        }
    }

    pub fn with_option(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.options.insert(key.into(), value.into());
        self
    }
}

/// Summary text in, raw spans out.
pub trait Extractor: Send + Sync {
    fn name(&self) -> &str;
    fn extract(&self, summary: &str) -> std::result::Result<Vec<RawSpan>, PluginError>;
}

/// Whether one plugin instance may serve concurrent callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Shared,
    PerWorker,
}

pub type ExtractorFactory =
    Arc<dyn Fn(&ExtractorConfig) -> std::result::Result<Arc<dyn Extractor>, PluginError> + Send + Sync>;

#[derive(Clone)]
struct Registration {
    factory: ExtractorFactory,
    concurrency: Concurrency,
}

/// Name-keyed extractor plugins.
#[derive(Clone)]
pub struct ExtractorRegistry {
    plugins: BTreeMap<String, Registration>,
}

impl fmt::Debug for ExtractorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtractorRegistry")
            .field("plugins", &self.plugins.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Default for ExtractorRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(RuleExtractor::NAME, Concurrency::Shared, |cfg| {
            Ok(Arc::new(RuleExtractor::from_config(cfg)?) as Arc<dyn Extractor>)
        });
        registry.register(CommandExtractor::NAME, Concurrency::PerWorker, |cfg| {
            Ok(Arc::new(CommandExtractor::from_config(cfg)?) as Arc<dyn Extractor>)
        });
        registry
    }
}

impl ExtractorRegistry {
    pub fn empty() -> Self {
        Self {
            plugins: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, concurrency: Concurrency, factory: F)
    where
        F: Fn(&ExtractorConfig) -> std::result::Result<Arc<dyn Extractor>, PluginError>
            + Send
            + Sync
            + 'static,
    {
        self.plugins.insert(
            name.to_owned(),
            Registration {
                factory: Arc::new(factory),
                concurrency,
            },
        );
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.plugins.keys().map(String::as_str)
    }

    pub fn concurrency(&self, name: &str) -> Result<Concurrency> {
        self.plugins
            .get(name)
            .map(|r| r.concurrency)
            .ok_or_else(|| Error::UnknownExtractor(name.to_owned()))
    }

    /// Builds a plugin instance for `config`.
    pub fn build(&self, config: &ExtractorConfig) -> Result<Arc<dyn Extractor>> {
        let reg = self
            .plugins
            .get(&config.plugin_name)
            .ok_or_else(|| Error::UnknownExtractor(config.plugin_name.clone()))?;
        (reg.factory)(config).map_err(|e| Error::ExtractorFailure {
            plugin: config.plugin_name.clone(),
            message: e.to_string(),
        })
    }

    pub fn extract_raw(&self, summary: &str, config: &ExtractorConfig) -> Result<Vec<RawSpan>> {
        let extractor = self.build(config)?;
        extract_raw_with(extractor.as_ref(), summary)
    }
}

/// Runs the plugin named in `config` from the default registry.
pub fn extract_raw(summary: &str, config: &ExtractorConfig) -> Result<Vec<RawSpan>> {
    ExtractorRegistry::default().extract_raw(summary, config)
}

/// Runs an already-built extractor, checking its output is in bounds.
pub fn extract_raw_with(extractor: &dyn Extractor, summary: &str) -> Result<Vec<RawSpan>> {
    if summary.trim().is_empty() {
        return Err(Error::ExtractorFailure {
            plugin: extractor.name().to_owned(),
            message: "summary is empty".into(),
        });
    }
    let spans = extractor
        .extract(summary)
        .map_err(|e| Error::ExtractorFailure {
            plugin: extractor.name().to_owned(),
            message: e.to_string(),
        })?;
    for s in &spans {
        if s.span.end > summary.len()
            || s.span.start >= s.span.end
            || summary.get(s.span.range()) != Some(s.surface.as_str())
        {
            return Err(Error::ExtractorFailure {
                plugin: extractor.name().to_owned(),
                message: format!("span {} does not match the summary text", s.span),
            });
        }
    }
    Ok(spans)
}

/// Extracts and resolves the factual factors of `summary`.
pub fn extract_factors(extractor: &dyn Extractor, summary: &str) -> Result<Vec<FactualFactor>> {
    let raw = extract_raw_with(extractor, summary)?;
    Ok(resolve_overlaps(summary, &raw))
}

/// Resolves raw spans into disjoint factual factors.
///
/// Spans are first clipped to the sentence containing their start (dropped
/// if clipping leaves only whitespace). Named entities win over noun phrases:
/// any noun phrase sharing an offset with a named entity is removed. Within
/// one kind, overlapping spans are settled longest-first, ties going to the
/// earliest start. The result is sorted by start and indexed from 0.
pub fn resolve_overlaps(summary: &str, raw: &[RawSpan]) -> Vec<FactualFactor> {
    let sentences = split_sentences(summary);

    let mut clipped: Vec<(Span, FactorKind, usize)> = raw
        .iter()
        .filter(|r| r.span.end <= summary.len() && r.span.start < r.span.end)
        .filter_map(|r| clip_to_sentence(summary, &sentences, r.span).map(|(s, i)| (s, r.kind, i)))
        .collect();
    clipped.sort_by_key(|(span, kind, _)| (*kind, std::cmp::Reverse(span.len()), span.start, span.end));
    clipped.dedup_by_key(|(span, kind, _)| (*span, *kind));

    // NamedEntity sorts before NounPhrase, so entities claim their offsets first.
    let mut kept: Vec<(Span, FactorKind, usize)> = Vec::new();
    for cand in clipped {
        if kept.iter().all(|(s, _, _)| !s.overlaps(&cand.0)) {
            kept.push(cand);
        }
    }
    kept.sort_by_key(|(span, _, _)| span.start);
    kept.into_iter()
        .enumerate()
        .map(|(index, (span, kind, sentence_index))| FactualFactor {
            index,
            span,
            surface: summary[span.range()].to_owned(),
            kind,
            sentence_index,
        })
        .collect()
}

fn clip_to_sentence(summary: &str, sentences: &[Span], span: Span) -> Option<(Span, usize)> {
    let (idx, sentence) = sentences
        .iter()
        .enumerate()
        .find(|(_, s)| s.overlaps(&span))?;
    let mut start = span.start.max(sentence.start);
    let mut end = span.end.min(sentence.end);
    if !summary.is_char_boundary(start) || !summary.is_char_boundary(end) {
        return None;
    }
    let piece = &summary[start..end];
    let trimmed_front = piece.len() - piece.trim_start().len();
    start += trimmed_front;
    end -= piece.len() - piece.trim_end().len();
    (start < end).then_some((Span::new(start, end), idx))
}
