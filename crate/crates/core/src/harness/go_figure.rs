//! Sensitivity testing by controlled error injection.
//!
//! A metric that tracks factual consistency should score gold summaries
//! highest, unrelated text lowest, and corrupted summaries in between,
//! dropping as more errors are injected.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use super::stats::pearson_r;
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::scoring::token_f1;
use crate::text::{contains_case_insensitive, split_sentences};
use crate::types::{EvalUnit, FactorKind, FactualFactor};

pub const LEVELS: [usize; 3] = [1, 2, 3];

/// Which factors an injection targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Entity,
    NonEntity,
}

impl ErrorKind {
    pub fn factor_kind(self) -> FactorKind {
        match self {
            ErrorKind::Entity => FactorKind::NamedEntity,
            ErrorKind::NonEntity => FactorKind::NounPhrase,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Entity => "entity",
            ErrorKind::NonEntity => "non_entity",
        })
    }
}

/// A unit whose summary carries injected errors at known factor positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedUnit {
    pub unit: EvalUnit,
    pub level: usize,
    pub kind: ErrorKind,
    /// Factor indices (in the gold summary) that were replaced.
    pub corrupted: Vec<usize>,
    /// `(original, replacement)` per corrupted factor.
    pub replacements: Vec<(String, String)>,
}

fn stable_hash(s: &str) -> u64 {
    // FNV-1a; std's hasher is not stable across releases
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn match_initial_case(template: &str, text: &str) -> String {
    let mut chars = text.chars();
    let Some(first) = chars.next() else {
        return String::new();
    };
    let upper = template.chars().next().is_some_and(char::is_uppercase);
    let first: String = if upper {
        first.to_uppercase().collect()
    } else {
        first.to_lowercase().collect()
    };
    first + chars.as_str()
}

/// Swaps summary factors for same-kind factors found elsewhere in a corpus.
pub struct ErrorInjector<'p> {
    pipeline: &'p Pipeline,
    factors: HashMap<String, Vec<FactualFactor>>,
    pool: BTreeMap<ErrorKind, Vec<String>>,
}

const MAX_ATTEMPTS: usize = 32;

impl<'p> ErrorInjector<'p> {
    /// Extracts every gold summary of `corpus` to build the replacement pool.
    pub fn new(pipeline: &'p Pipeline, corpus: &[EvalUnit]) -> Result<Self> {
        let mut factors = HashMap::new();
        let mut pool: BTreeMap<ErrorKind, BTreeSet<String>> = BTreeMap::new();
        for unit in corpus {
            let gold = unit.gold_summary.as_deref().unwrap_or(&unit.summary);
            let fs = pipeline.extract(gold)?;
            for f in &fs {
                let kind = match f.kind {
                    FactorKind::NamedEntity => ErrorKind::Entity,
                    FactorKind::NounPhrase => ErrorKind::NonEntity,
                };
                pool.entry(kind).or_default().insert(f.surface.clone());
            }
            factors.insert(unit.id.clone(), fs);
        }
        Ok(Self {
            pipeline,
            factors,
            pool: pool.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        })
    }

    fn gold_factors(&self, unit: &EvalUnit, gold: &str) -> Result<Vec<FactualFactor>> {
        match self.factors.get(&unit.id) {
            Some(f) => Ok(f.clone()),
            None => self.pipeline.extract(gold),
        }
    }

    /// Number of factors of `kind` in the unit's gold summary.
    pub fn count(&self, unit: &EvalUnit, kind: ErrorKind) -> Result<usize> {
        let gold = unit.gold_summary.as_deref().unwrap_or(&unit.summary);
        Ok(self
            .gold_factors(unit, gold)?
            .iter()
            .filter(|f| f.kind == kind.factor_kind())
            .count())
    }

    /// Replaces exactly `level` factors of `kind` in the gold summary.
    ///
    /// Replacements never occur in the unit's document and share no token
    /// with the factor they replace. Draws whose corrupted summary would
    /// extract differently (so positions no longer line up) are redrawn.
    pub fn inject(&self, unit: &EvalUnit, level: usize, kind: ErrorKind, seed: u64) -> Result<CorruptedUnit> {
        let gold = unit.gold_summary.as_deref().ok_or_else(|| Error::InvalidUnit {
            id: unit.id.clone(),
            reason: "error injection needs a gold summary".into(),
        })?;
        let factors = self.gold_factors(unit, gold)?;
        let candidates: Vec<&FactualFactor> = factors.iter().filter(|f| f.kind == kind.factor_kind()).collect();
        if level == 0 || candidates.len() < level {
            return Err(Error::InsufficientFactors {
                id: unit.id.clone(),
                kind: kind.to_string(),
                needed: level,
                found: candidates.len(),
            });
        }
        let pool = self.pool.get(&kind).map(Vec::as_slice).unwrap_or(&[]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&unit.id));
        for _ in 0..MAX_ATTEMPTS {
            let mut chosen: Vec<&FactualFactor> = sample(&mut rng, candidates.len(), level)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            chosen.sort_by_key(|f| f.index);
            let mut replacements = Vec::with_capacity(level);
            let mut used: Vec<&str> = Vec::new();
            for f in &chosen {
                let eligible: Vec<&String> = pool
                    .iter()
                    .filter(|r| !contains_case_insensitive(&unit.document, r))
                    .filter(|r| token_f1(&f.surface, r) == 0.0)
                    .filter(|r| !used.contains(&r.as_str()))
                    .filter(|r| factors.iter().all(|g| token_f1(&g.surface, r) < 1.0))
                    .collect();
                let Some(r) = eligible.get(rng.gen_range(0..eligible.len().max(1))) else {
                    return Err(Error::DegenerateInput(format!(
                        "unit {}: no {kind} replacement for `{}` outside the document",
                        unit.id, f.surface
                    )));
                };
                used.push(r.as_str());
                let text = match kind {
                    ErrorKind::Entity => (*r).clone(),
                    ErrorKind::NonEntity => match_initial_case(&f.surface, r),
                };
                replacements.push((f.surface.clone(), text));
            }
            let mut summary = gold.to_owned();
            for (f, (_, text)) in chosen.iter().zip(&replacements).rev() {
                summary.replace_range(f.span.range(), text);
            }
            let corrupted: Vec<usize> = chosen.iter().map(|f| f.index).collect();
            if self.aligned(&factors, &summary, &corrupted, &replacements)? {
                let mut out = unit.clone();
                out.id = format!("{}~{kind}{level}s{seed}", unit.id);
                out.summary = summary;
                return Ok(CorruptedUnit {
                    unit: out,
                    level,
                    kind,
                    corrupted,
                    replacements,
                });
            }
        }
        Err(Error::DegenerateInput(format!(
            "unit {}: could not inject {level} {kind} errors that keep factor positions aligned",
            unit.id
        )))
    }

    fn aligned(
        &self,
        gold: &[FactualFactor],
        summary: &str,
        corrupted: &[usize],
        replacements: &[(String, String)],
    ) -> Result<bool> {
        let now = self.pipeline.extract(summary)?;
        if now.len() != gold.len() {
            return Ok(false);
        }
        let mut repl = corrupted.iter().zip(replacements);
        let mut next = repl.next();
        for (g, n) in gold.iter().zip(&now) {
            if g.kind != n.kind {
                return Ok(false);
            }
            match next {
                Some((&idx, (_, text))) if idx == g.index => {
                    if &n.surface != text {
                        return Ok(false);
                    }
                    next = repl.next();
                }
                _ => {
                    if n.surface != g.surface {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

/// Replaces every summary with unrelated text: sentences from the other
/// units' documents, shuffled and cut to the summary's word count.
pub fn random_text_units(corpus: &[EvalUnit], seed: u64) -> Vec<EvalUnit> {
    let sentences: Vec<(usize, &str)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(i, u)| {
            split_sentences(&u.document)
                .into_iter()
                .map(move |s| (i, &u.document[s.range()]))
        })
        .collect();
    corpus
        .iter()
        .enumerate()
        .map(|(i, unit)| {
            let reference = unit.gold_summary.as_deref().unwrap_or(&unit.summary);
            let target = reference.split_whitespace().count().max(1);
            let mut others: Vec<&str> = sentences.iter().filter(|(j, _)| *j != i).map(|(_, s)| *s).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&unit.id));
            others.shuffle(&mut rng);
            let words: Vec<&str> = others.iter().flat_map(|s| s.split_whitespace()).take(target).collect();
            let mut out = unit.clone();
            out.id = format!("{}~random", unit.id);
            out.summary = if words.is_empty() {
                unit.summary.clone()
            } else {
                words.join(" ")
            };
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScores {
    /// Mean score over eligible units and seeds; `None` when no unit had
    /// enough factors of the kind.
    pub entity: Option<f64>,
    pub non_entity: Option<f64>,
    pub entity_units: usize,
    pub non_entity_units: usize,
}

impl LevelScores {
    /// Mean over whichever kinds were scored.
    pub fn combined(&self) -> Option<f64> {
        let present: Vec<f64> = [self.entity, self.non_entity].into_iter().flatten().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoFigureReport {
    pub upper_bound: f64,
    pub level_scores: BTreeMap<usize, LevelScores>,
    pub lower_bound: f64,
    /// Correlation between error level and mean score.
    pub sensitivity_correlation: f64,
    pub p_value: f64,
    pub unit_count: usize,
    pub seeds: Vec<u64>,
}

impl GoFigureReport {
    /// lower bound <= every level score <= upper bound.
    pub fn bounds_ordered(&self) -> bool {
        self.level_scores
            .values()
            .flat_map(|l| [l.entity, l.non_entity])
            .flatten()
            .all(|s| self.lower_bound <= s && s <= self.upper_bound)
    }
}

/// Runs the full protocol on a corpus of units with gold summaries.
///
/// A unit takes part in a kind's level scores only if its gold summary
/// holds at least three factors of that kind, so every level averages over
/// the same units.
pub fn run_go_figure(pipeline: &Pipeline, corpus: &[EvalUnit], seeds: &[u64]) -> Result<GoFigureReport> {
    if corpus.len() < 10 {
        return Err(Error::DegenerateInput(format!(
            "corpus has {} units; at least 10 are needed",
            corpus.len()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    if let Some(u) = corpus.iter().find(|u| u.gold_summary.is_none()) {
        return Err(Error::InvalidUnit {
            id: u.id.clone(),
            reason: "missing gold summary".into(),
        });
    }

    let gold_units: Vec<EvalUnit> = corpus
        .iter()
        .map(|u| {
            let mut g = u.clone();
            g.summary = u.gold_summary.clone().unwrap_or_default();
            g
        })
        .collect();
    let upper_bound = pipeline.evaluate(&gold_units)?.mean_score();

    let lower_units: Vec<EvalUnit> = seeds.iter().flat_map(|&s| random_text_units(corpus, s)).collect();
    let lower_bound = pipeline.evaluate(&lower_units)?.mean_score();

    let injector = ErrorInjector::new(pipeline, corpus)?;
    let max_level = *LEVELS.iter().max().unwrap_or(&1);
    let mut level_scores = BTreeMap::new();
    for &level in &LEVELS {
        let mut per_kind: BTreeMap<ErrorKind, (Option<f64>, usize)> = BTreeMap::new();
        for kind in [ErrorKind::Entity, ErrorKind::NonEntity] {
            let mut eligible = Vec::new();
            for u in corpus {
                if injector.count(u, kind)? >= max_level {
                    eligible.push(u);
                }
            }
            let mut corrupted = Vec::with_capacity(eligible.len() * seeds.len());
            for &seed in seeds {
                for u in &eligible {
                    corrupted.push(injector.inject(u, level, kind, seed)?.unit);
                }
            }
            let score = if corrupted.is_empty() {
                None
            } else {
                Some(pipeline.evaluate(&corrupted)?.mean_score())
            };
            per_kind.insert(kind, (score, eligible.len()));
        }
        let (entity, entity_units) = per_kind[&ErrorKind::Entity];
        let (non_entity, non_entity_units) = per_kind[&ErrorKind::NonEntity];
        level_scores.insert(
            level,
            LevelScores {
                entity,
                non_entity,
                entity_units,
                non_entity_units,
            },
        );
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&level, scores) in &level_scores {
        if let Some(s) = scores.combined() {
            xs.push(level as f64);
            ys.push(s);
        }
    }
    let (sensitivity_correlation, p_value) = match pearson_r(&xs, &ys) {
        Ok(p) => (p.r, p.p),
        Err(e) => {
            log::warn!("sensitivity correlation undefined: {e}");
            (f64::NAN, f64::NAN)
        }
    };
    Ok(GoFigureReport {
        upper_bound,
        level_scores,
        lower_bound,
        sensitivity_correlation,
        p_value,
        unit_count: corpus.len(),
        seeds: seeds.to_vec(),
    })
}
