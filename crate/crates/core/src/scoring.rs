//! Agreement between summary factors and cloze fills.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::backend::ClozeFill;
use crate::error::{Error, Result};
use crate::text::normalize;
use crate::types::{FactorKind, FactualFactor, Span};

pub const DEFAULT_ERROR_THRESHOLD: f64 = 0.5;

/// SQuAD-style token F1 over normalized token multisets.
///
/// Two empty answers agree perfectly; exactly one empty answer scores 0.
pub fn token_f1(gold: &str, generated: &str) -> f64 {
    let gold = normalize(gold);
    let generated = normalize(generated);
    match (gold.is_empty(), generated.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold.tokens() {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in generated.tokens() {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / generated.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Mean token probability of a fill; 0 for an abstention.
pub fn factor_confidence(fill: &ClozeFill) -> f64 {
    if fill.token_probs.is_empty() {
        0.0
    } else {
        fill.token_probs.iter().sum::<f64>() / fill.token_probs.len() as f64
    }
}

/// What the confidence gate zeroes: one factor, or the whole summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateScope {
    #[default]
    PerFactor,
    PerSummary,
}

impl fmt::Display for GateScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateScope::PerFactor => "per_factor",
            GateScope::PerSummary => "per_summary",
        })
    }
}

impl FromStr for GateScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "per_factor" | "factor" => Ok(GateScope::PerFactor),
            "per_summary" | "summary" => Ok(GateScope::PerSummary),
            other => Err(format!("unknown gate scope `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub scope: GateScope,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            scope: GateScope::PerFactor,
        }
    }
}

impl GateConfig {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Returns `(gated, contribution)`. Gated iff both values fall strictly
/// below their thresholds; a gated factor contributes nothing.
pub fn gate(f1: f64, confidence: f64, cfg: &GateConfig) -> (bool, f64) {
    let gated = confidence < cfg.alpha && f1 < cfg.beta;
    (gated, if gated { 0.0 } else { f1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScore {
    pub factor_index: usize,
    pub span: Span,
    pub kind: FactorKind,
    pub gold_surface: String,
    pub filled_surface: String,
    pub f1: f64,
    pub confidence: f64,
    pub gated: bool,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitScore {
    pub unit_id: String,
    pub factor_scores: Vec<FactorScore>,
    pub cloze_score: f64,
    pub error_spans: Vec<Span>,
    /// Set when no factor was extracted; the score is then 1 by convention.
    #[serde(default)]
    pub no_factors: bool,
}

impl UnitScore {
    /// Recomputes `error_spans` with a different threshold.
    pub fn relocalize(&mut self, threshold: f64) {
        self.error_spans = localize_errors(self, threshold);
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        self.factor_scores
            .iter()
            .filter(|f| self.error_spans.contains(&f.span))
            .map(|f| f.factor_index)
            .collect()
    }
}

/// Scores one unit: `sum(contributions) / N`.
///
/// `fills` may come in any order but must hold exactly one fill per factor.
/// Error spans are localized at [`DEFAULT_ERROR_THRESHOLD`].
pub fn score_unit(unit_id: &str, factors: &[FactualFactor], fills: &[ClozeFill], cfg: &GateConfig) -> Result<UnitScore> {
    let mismatch = || Error::FillMismatch {
        factors: factors.len(),
        fills: fills.len(),
    };
    if fills.len() != factors.len() {
        return Err(mismatch());
    }
    if factors.is_empty() {
        log::warn!("unit {unit_id}: no factual factors extracted; scoring 1.0");
        return Ok(UnitScore {
            unit_id: unit_id.to_owned(),
            factor_scores: Vec::new(),
            cloze_score: 1.0,
            error_spans: Vec::new(),
            no_factors: true,
        });
    }
    let by_index: HashMap<usize, &ClozeFill> = fills.iter().map(|f| (f.factor_index, f)).collect();
    let mut factor_scores = Vec::with_capacity(factors.len());
    for factor in factors {
        let fill = by_index.get(&factor.index).ok_or_else(mismatch)?;
        let f1 = token_f1(&factor.surface, &fill.filled);
        let confidence = factor_confidence(fill);
        let (gated, contribution) = match cfg.scope {
            GateScope::PerFactor => gate(f1, confidence, cfg),
            GateScope::PerSummary => (false, f1),
        };
        factor_scores.push(FactorScore {
            factor_index: factor.index,
            span: factor.span,
            kind: factor.kind,
            gold_surface: factor.surface.clone(),
            filled_surface: fill.filled.clone(),
            f1,
            confidence,
            gated,
            contribution,
        });
    }
    let n = factor_scores.len() as f64;
    let mut cloze_score = factor_scores.iter().map(|f| f.contribution).sum::<f64>() / n;
    if cfg.scope == GateScope::PerSummary {
        let mean_conf = factor_scores.iter().map(|f| f.confidence).sum::<f64>() / n;
        let (gated, score) = gate(cloze_score, mean_conf, cfg);
        if gated {
            for f in &mut factor_scores {
                f.gated = true;
                f.contribution = 0.0;
            }
        }
        cloze_score = score;
    }
    let mut score = UnitScore {
        unit_id: unit_id.to_owned(),
        factor_scores,
        cloze_score,
        error_spans: Vec::new(),
        no_factors: false,
    };
    score.relocalize(DEFAULT_ERROR_THRESHOLD);
    Ok(score)
}

/// Spans of factors whose contribution falls below `threshold`, in
/// reading order.
pub fn localize_errors(score: &UnitScore, threshold: f64) -> Vec<Span> {
    let mut spans: Vec<Span> = score
        .factor_scores
        .iter()
        .filter(|f| f.contribution < threshold)
        .map(|f| f.span)
        .collect();
    spans.sort();
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factor(index: usize, start: usize, surface: &str) -> FactualFactor {
        FactualFactor {
            index,
            span: Span::new(start, start + surface.len()),
            surface: surface.into(),
            kind: FactorKind::NamedEntity,
            sentence_index: 0,
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("seattle seahawks", "seattle seahawks"), 1.0);
        assert_eq!(token_f1("The president", "brady"), 0.0);
        assert_eq!(token_f1("seattle seahawks", "seattle hawks"), 0.5);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("the", ""), 1.0);
        assert_eq!(token_f1("x", ""), 0.0);
        assert_eq!(token_f1("", "x"), 0.0);
        // multiplicity: gold {a:2}, generated {a:1} -> P=1, R=1/2
        assert!((token_f1("x x", "x") - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn confidence_is_mean_probability() {
        let fill = ClozeFill {
            factor_index: 0,
            filled: "a b".into(),
            token_probs: vec![0.8, 0.6],
        };
        assert!((factor_confidence(&fill) - 0.7).abs() < 1e-15);
        assert_eq!(factor_confidence(&ClozeFill::abstain(0)), 0.0);
    }

    #[test]
    fn gate_boundaries() {
        let cfg = GateConfig::default();
        assert_eq!(gate(0.4, 0.4, &cfg), (true, 0.0));
        assert_eq!(gate(0.4, 0.6, &cfg), (false, 0.4));
        assert_eq!(gate(0.5, 0.4, &cfg), (false, 0.5));
        assert_eq!(gate(0.4, 0.5, &cfg), (false, 0.4));
    }

    #[test]
    fn example_with_one_wrong_factor() {
        let summary_factors = vec![
            factor(0, 0, "seattle seahawks"),
            factor(1, 20, "arizona"),
            factor(2, 30, "The president"),
        ];
        let fills = vec![
            ClozeFill::uniform(0, "seattle seahawks", 0.9),
            ClozeFill::uniform(1, "arizona", 0.9),
            ClozeFill::uniform(2, "brady", 0.9),
        ];
        let s = score_unit("ex1", &summary_factors, &fills, &GateConfig::default()).unwrap();
        assert!((s.cloze_score - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.error_spans, vec![summary_factors[2].span]);
        assert_eq!(s.flagged_indices(), vec![2]);
    }

    #[test]
    fn no_factors_scores_one_with_flag() {
        let s = score_unit("u", &[], &[], &GateConfig::default()).unwrap();
        assert_eq!(s.cloze_score, 1.0);
        assert!(s.no_factors);
    }

    #[test]
    fn mismatched_fills_are_rejected() {
        let fs = vec![factor(0, 0, "a")];
        assert!(matches!(
            score_unit("u", &fs, &[], &GateConfig::default()),
            Err(Error::FillMismatch { factors: 1, fills: 0 })
        ));
        let wrong_index = vec![ClozeFill::abstain(5)];
        assert!(score_unit("u", &fs, &wrong_index, &GateConfig::default()).is_err());
    }

    #[test]
    fn summary_scope_gates_everything_or_nothing() {
        let fs = vec![factor(0, 0, "alpha"), factor(1, 10, "beta")];
        let fills = vec![ClozeFill::uniform(0, "alpha", 0.2), ClozeFill::uniform(1, "wrong", 0.2)];
        let per_factor = score_unit("u", &fs, &fills, &GateConfig::default()).unwrap();
        assert_eq!(per_factor.cloze_score, 0.5);
        let cfg = GateConfig {
            alpha: 0.5,
            beta: 0.6,
            scope: GateScope::PerSummary,
        };
        let per_summary = score_unit("u", &fs, &fills, &cfg).unwrap();
        assert_eq!(per_summary.cloze_score, 0.0);
        assert!(per_summary.factor_scores.iter().all(|f| f.gated));
    }

    #[test]
    fn config_validation() {
        assert!(GateConfig::new(0.0, 1.0).validate().is_ok());
        assert!(GateConfig::new(-0.1, 0.5).validate().is_err());
        assert!(GateConfig::new(0.5, 1.5).validate().is_err());
    }
}
