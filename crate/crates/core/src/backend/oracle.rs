use std::time::Duration;

use super::{BackendError, ClozeBackend, ClozeFill, ClozeRequest};
use crate::text::contains_case_insensitive;

/// Fills each slot with the gold summary's factor at the same index.
///
/// Slots without a gold counterpart are answered with an abstention.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldReferenceOracle;

impl ClozeBackend for GoldReferenceOracle {
    fn identity(&self) -> String {
        "gold-reference".into()
    }

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError> {
        request.validate()?;
        let reference = request.reference.as_deref().unwrap_or(&[]);
        Ok(request
            .masked
            .slots
            .iter()
            .map(|slot| match reference.get(slot.factor_index) {
                Some(gold) if !gold.trim().is_empty() => ClozeFill::uniform(slot.factor_index, gold, 1.0),
                _ => ClozeFill::abstain(slot.factor_index),
            })
            .collect())
    }

    fn needs_reference(&self) -> bool {
        true
    }
}

/// Answers a slot with its own surface iff that surface occurs in the
/// document (case-insensitively); abstains otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct DocumentLookupOracle;

impl ClozeBackend for DocumentLookupOracle {
    fn identity(&self) -> String {
        "document-lookup".into()
    }

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError> {
        request.validate()?;
        Ok(request
            .masked
            .slots
            .iter()
            .map(|slot| {
                if contains_case_insensitive(&request.document, &slot.surface) {
                    ClozeFill::uniform(slot.factor_index, &slot.surface, 1.0)
                } else {
                    ClozeFill::abstain(slot.factor_index)
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    /// Return the masked surface.
    Echo,
    /// Abstain on every slot.
    Abstain,
    /// Return the same text for every slot.
    Fixed(String),
}

/// Deterministic stand-in with optional per-call latency, for timing runs.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub mode: MockMode,
    pub probability: f64,
    pub latency: Duration,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self {
            mode: MockMode::Echo,
            probability: 1.0,
            latency: Duration::ZERO,
        }
    }
}

impl MockBackend {
    pub fn with_latency(latency: Duration) -> Self {
        Self {
            latency,
            ..Self::default()
        }
    }
}

impl ClozeBackend for MockBackend {
    fn identity(&self) -> String {
        match &self.mode {
            MockMode::Echo => format!("mock:echo:{}", self.probability),
            MockMode::Abstain => "mock:abstain".into(),
            MockMode::Fixed(t) => format!("mock:fixed:{}:{t}", self.probability),
        }
    }

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError> {
        request.validate()?;
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        Ok(request
            .masked
            .slots
            .iter()
            .map(|slot| match &self.mode {
                MockMode::Echo => ClozeFill::uniform(slot.factor_index, &slot.surface, self.probability),
                MockMode::Abstain => ClozeFill::abstain(slot.factor_index),
                MockMode::Fixed(t) if t.trim().is_empty() => ClozeFill::abstain(slot.factor_index),
                MockMode::Fixed(t) => ClozeFill::uniform(slot.factor_index, t, self.probability),
            })
            .collect())
    }
}
