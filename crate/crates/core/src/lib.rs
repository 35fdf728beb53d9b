//! Cloze-based factual consistency scoring for abstractive summaries.
//!
//! A summary's named entities and noun phrases are masked one group at a
//! time; a cloze backend fills each blank from the source document, and the
//! summary scores by how well the fills agree with what it actually said.
//!
//! ```
//! use cloze_core::pipeline::{BackendConfig, Pipeline, PipelineConfig};
//! use cloze_core::EvalUnit;
//!
//! let config = PipelineConfig {
//!     backend: BackendConfig::named("document-lookup"),
//!     ..PipelineConfig::default()
//! };
//! let pipeline = Pipeline::new(config).unwrap();
//! let unit = EvalUnit::new("u1", "Alice Brown visited Paris on Monday.", "Alice Brown visited Rome.");
//! let result = pipeline.evaluate_one(&unit).unwrap();
//! assert_eq!(result.score.cloze_score, 0.5);
//! ```

pub mod backend;
pub mod error;
pub mod extraction;
pub mod harness;
pub mod masking;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod text;
pub mod types;

pub use error::{Error, Result};
pub use pipeline::{Pipeline, PipelineConfig};
pub use types::{EvalUnit, FactorKind, FactualFactor, Span};
