//! Grouping factors into cloze passes and rendering the masked "questions".

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::extraction::{extract_factors, Extractor};
use crate::text::split_sentences;
use crate::types::{EvalUnit, FactualFactor, Span};

pub const DEFAULT_SENTINEL: &str = "[MASK]";

/// Whether the cloze model sees the whole summary or one sentence per pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    SummaryLevel,
    SentenceLevel,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::SummaryLevel => "summary_level",
            Granularity::SentenceLevel => "sentence_level",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "summary_level" | "summary" => Ok(Granularity::SummaryLevel),
            "sentence_level" | "sentence" => Ok(Granularity::SentenceLevel),
            other => Err(format!("unknown granularity `{other}`")),
        }
    }
}

/// Partition of a unit's factor indices into cloze passes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub unit_id: String,
    pub k: usize,
    pub granularity: Granularity,
    pub groups: Vec<Vec<usize>>,
}

impl MaskPlan {
    pub fn pass_count(&self) -> usize {
        self.groups.len()
    }
}

/// Number of passes [`plan_masks`] produces, computed from counts alone.
pub fn expected_pass_count(factors: &[FactualFactor], k: usize, granularity: Granularity) -> usize {
    match granularity {
        Granularity::SummaryLevel => factors.len().div_ceil(k),
        Granularity::SentenceLevel => {
            let mut total = 0;
            let mut i = 0;
            while i < factors.len() {
                let s = factors[i].sentence_index;
                let n = factors[i..].iter().take_while(|f| f.sentence_index == s).count();
                total += n.div_ceil(k);
                i += n;
            }
            total
        }
    }
}

/// Greedily packs consecutive factors into groups of at most `k`.
///
/// Summary level yields `ceil(N / k)` groups; sentence level packs each
/// sentence separately, so groups never straddle a sentence.
pub fn plan_masks(
    unit_id: &str,
    factors: &[FactualFactor],
    k: usize,
    granularity: Granularity,
) -> Result<MaskPlan> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for f in factors {
        let start_new = match groups.last() {
            None => true,
            Some(g) => {
                g.len() == k
                    || (granularity == Granularity::SentenceLevel
                        && factors[g[0]].sentence_index != f.sentence_index)
            }
        };
        if start_new {
            groups.push(vec![f.index]);
        } else if let Some(g) = groups.last_mut() {
            g.push(f.index);
        }
    }
    Ok(MaskPlan {
        unit_id: unit_id.to_owned(),
        k,
        granularity,
        groups,
    })
}

/// One masked factor inside a [`MaskedText`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub factor_index: usize,
    /// Byte offset of the sentinel in the masked text.
    pub position: usize,
    /// The factor text the sentinel replaced.
    pub surface: String,
}

/// A cloze question: source text with the group's factors replaced by a
/// sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedText {
    pub text: String,
    pub sentinel: String,
    pub slots: Vec<Slot>,
    pub context_scope: Granularity,
    /// Where the rendered source text sits in the summary.
    pub source_span: Span,
}

impl MaskedText {
    /// Puts `fills[i]` back at slot `i`.
    pub fn fill_with<S: AsRef<str>>(&self, fills: &[S]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for (slot, fill) in self.slots.iter().zip(fills) {
            out.push_str(&self.text[cursor..slot.position]);
            out.push_str(fill.as_ref());
            cursor = slot.position + self.sentinel.len();
        }
        out.push_str(&self.text[cursor..]);
        out
    }

    /// Restores the original source text.
    pub fn unmask(&self) -> String {
        let surfaces: Vec<&str> = self.slots.iter().map(|s| s.surface.as_str()).collect();
        self.fill_with(&surfaces)
    }
}

fn render_spans(
    summary: &str,
    scope: Span,
    masked: &[&FactualFactor],
    sentinel: &str,
    context_scope: Granularity,
) -> MaskedText {
    let mut text = String::with_capacity(scope.len() + masked.len() * sentinel.len());
    let mut slots = Vec::with_capacity(masked.len());
    let mut cursor = scope.start;
    for f in masked {
        text.push_str(&summary[cursor..f.span.start]);
        slots.push(Slot {
            factor_index: f.index,
            position: text.len(),
            surface: f.surface.clone(),
        });
        text.push_str(sentinel);
        cursor = f.span.end;
    }
    text.push_str(&summary[cursor..scope.end]);
    MaskedText {
        text,
        sentinel: sentinel.to_owned(),
        slots,
        context_scope,
        source_span: scope,
    }
}

/// Renders pass `group_index` of `plan`.
///
/// Panics if `group_index` is out of range or the plan does not belong to
/// `factors`.
pub fn render_masked(
    unit: &EvalUnit,
    factors: &[FactualFactor],
    plan: &MaskPlan,
    group_index: usize,
    sentinel: &str,
) -> MaskedText {
    let group = &plan.groups[group_index];
    let masked: Vec<&FactualFactor> = group.iter().map(|&i| &factors[i]).collect();
    let summary = unit.summary.as_str();
    let scope = match plan.granularity {
        Granularity::SummaryLevel => Span::new(0, summary.len()),
        Granularity::SentenceLevel => {
            let sentences = split_sentences(summary);
            sentences
                .get(masked[0].sentence_index)
                .copied()
                .unwrap_or(Span::new(0, summary.len()))
        }
    };
    render_spans(summary, scope, &masked, sentinel, plan.granularity)
}

/// One line of cloze-training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub document: String,
    pub masked_text: String,
    pub targets: Vec<String>,
    #[serde(skip)]
    pub sentence_index: usize,
}

/// Builds a training sample from a gold summary: pick a sentence uniformly
/// (redrawing sentences without factors), then mask a uniformly drawn number
/// `m` in `[1, N_s]` of its factors, chosen uniformly without replacement.
pub fn make_training_sample(
    document: &str,
    gold_summary: &str,
    extractor: &dyn Extractor,
    sentinel: &str,
    rng_seed: u64,
) -> Result<TrainingSample> {
    let factors = extract_factors(extractor, gold_summary)?;
    let sentences = split_sentences(gold_summary);
    training_sample_from_factors(document, gold_summary, &sentences, &factors, sentinel, rng_seed)
}

pub(crate) fn training_sample_from_factors(
    document: &str,
    gold_summary: &str,
    sentences: &[Span],
    factors: &[FactualFactor],
    sentinel: &str,
    rng_seed: u64,
) -> Result<TrainingSample> {
    if factors.is_empty() || sentences.is_empty() {
        return Err(Error::NoFactors);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (sentence_index, in_sentence) = loop {
        let s = rng.gen_range(0..sentences.len());
        let members: Vec<&FactualFactor> = factors.iter().filter(|f| f.sentence_index == s).collect();
        if !members.is_empty() {
            break (s, members);
        }
    };
    let m = rng.gen_range(1..=in_sentence.len());
    let mut picked = sample(&mut rng, in_sentence.len(), m).into_vec();
    picked.sort_unstable();
    let masked: Vec<&FactualFactor> = picked.iter().map(|&i| in_sentence[i]).collect();
    let rendered = render_spans(
        gold_summary,
        sentences[sentence_index],
        &masked,
        sentinel,
        Granularity::SentenceLevel,
    );
    Ok(TrainingSample {
        document: document.to_owned(),
        masked_text: rendered.text,
        targets: masked.iter().map(|f| f.surface.clone()).collect(),
        sentence_index,
    })
}
