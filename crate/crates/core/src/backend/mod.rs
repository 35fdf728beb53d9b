//! Cloze backends: given a document and a masked summary, fill every slot.
//!
//! The crate never embeds a model. Real masked-language models sit behind
//! [`RemoteBackend`]; the bundled oracles make every pipeline property
//! testable without one.

mod cache;
mod oracle;
mod remote;
pub mod wire;

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

use crate::masking::MaskedText;

pub use cache::{cache_key, CachedBackend, FillCache};
pub use oracle::{DocumentLookupOracle, GoldReferenceOracle, MockBackend, MockMode};
pub use remote::{RemoteBackend, RemoteConfig, Transport};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Transport failure; the request may be retried.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// The backend answered, but not according to the protocol.
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid cloze request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Unavailable(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BackendError::Unavailable(_) => "backend_unavailable",
            BackendError::MalformedResponse(_) => "malformed_response",
            BackendError::InvalidRequest(_) => "invalid_request",
        }
    }
}

/// A backend's answer for one masked factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClozeFill {
    pub factor_index: usize,
    /// Empty means the backend could not answer.
    pub filled: String,
    /// One probability per backend token of `filled`.
    pub token_probs: Vec<f64>,
}

impl ClozeFill {
    /// An unanswerable slot.
    pub fn abstain(factor_index: usize) -> Self {
        Self {
            factor_index,
            filled: String::new(),
            token_probs: Vec::new(),
        }
    }

    /// A fill whose every whitespace token has probability `p`.
    pub fn uniform(factor_index: usize, filled: &str, p: f64) -> Self {
        let filled = filled.trim();
        Self {
            factor_index,
            filled: filled.to_owned(),
            token_probs: vec![p; filled.split_whitespace().count()],
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if let Some(p) = self.token_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(format!("slot {}: probability {p} outside [0,1]", self.factor_index));
        }
        if self.filled.is_empty() != self.token_probs.is_empty() {
            return Err(format!(
                "slot {}: empty fill must come with empty probabilities and vice versa",
                self.factor_index
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClozeRequest {
    pub request_id: String,
    pub document: String,
    pub masked: MaskedText,
    /// Gold factor surfaces by factor index; only consulted by reference
    /// oracles and never sent over the wire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<String>>,
}

impl ClozeRequest {
    pub fn new(request_id: impl Into<String>, document: impl Into<String>, masked: MaskedText) -> Self {
        Self {
            request_id: request_id.into(),
            document: document.into(),
            masked,
            reference: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.document.trim().is_empty() {
            return Err(BackendError::InvalidRequest("document is empty".into()));
        }
        if self.masked.slots.is_empty() {
            return Err(BackendError::InvalidRequest("masked text has no slots".into()));
        }
        Ok(())
    }
}

/// Checks a backend answer against the request: one valid fill per slot,
/// in slot order.
pub fn check_fills(request: &ClozeRequest, fills: &[ClozeFill]) -> Result<(), BackendError> {
    if fills.len() != request.masked.slots.len() {
        return Err(BackendError::MalformedResponse(format!(
            "{} fills for {} slots",
            fills.len(),
            request.masked.slots.len()
        )));
    }
    for (slot, fill) in request.masked.slots.iter().zip(fills) {
        if slot.factor_index != fill.factor_index {
            return Err(BackendError::MalformedResponse(format!(
                "expected slot {} but got {}",
                slot.factor_index, fill.factor_index
            )));
        }
        fill.check().map_err(BackendError::MalformedResponse)?;
    }
    Ok(())
}

/// Anything that realizes P(answer | document, masked summary).
///
/// Implementations must accept concurrent calls and return exactly one fill
/// per slot, in slot order.
pub trait ClozeBackend: Send + Sync {
    /// Stable identity; part of the cache key.
    fn identity(&self) -> String;

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError>;

    /// Whether requests must carry gold reference surfaces.
    fn needs_reference(&self) -> bool {
        false
    }
}

impl<B: ClozeBackend + ?Sized> ClozeBackend for Arc<B> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError> {
        (**self).fill(request)
    }

    fn needs_reference(&self) -> bool {
        (**self).needs_reference()
    }
}

/// Counts calls into a backend and the time spent inside it.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
    nanos: AtomicU64,
}

impl<B: ClozeBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
            nanos: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn busy(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::Relaxed))
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
        self.nanos.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ClozeBackend> ClozeBackend for CountingBackend<B> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn fill(&self, request: &ClozeRequest) -> Result<Vec<ClozeFill>, BackendError> {
        let started = Instant::now();
        let out = self.inner.fill(request);
        self.nanos
            .fetch_add(started.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
        out
    }

    fn needs_reference(&self) -> bool {
        self.inner.needs_reference()
    }
}
