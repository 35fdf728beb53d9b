//! Wall-clock cost of evaluation.

use serde::{Deserialize, Serialize};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::types::EvalUnit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub k: usize,
    /// `wall_clock_total / unit_count`.
    pub sec_per_summary: f64,
    /// Fastest repetition, in seconds.
    pub wall_clock_total: f64,
    pub unit_count: usize,
    /// Backend invocations in one repetition.
    pub backend_calls: u64,
    /// Time spent inside the backend during the fastest repetition.
    pub backend_seconds: f64,
    /// Everything but the backend, per summary.
    pub overhead_per_summary: f64,
    pub repetitions: Vec<f64>,
}

impl TimingReport {
    /// `sec_per_summary` with at least three significant digits.
    pub fn sec_per_summary_display(&self) -> String {
        format!("{:.3e}", self.sec_per_summary)
    }
}

/// Times full evaluations (extraction through scoring) of `units`.
///
/// One untimed warm-up pass runs first. Of `repetitions` timed passes the
/// fastest is reported, which filters scheduler noise. Run the pipeline
/// with `workers = 1` for unaccelerated per-summary figures, and without a
/// cache, or every timed pass will hit it.
pub fn time_pipeline(pipeline: &Pipeline, units: &[EvalUnit], k: usize, repetitions: usize) -> Result<TimingReport> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
    }
    if units.is_empty() {
        return Err(Error::InvalidConfig("cannot time an empty corpus".into()));
    }
    pipeline.evaluate_k(units, k)?;
    let mut best: Option<(Duration, Duration, u64)> = None;
    let mut repetition_secs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let out = pipeline.evaluate_k(units, k)?;
        repetition_secs.push(out.elapsed.as_secs_f64());
        if best.is_none_or(|(e, _, _)| out.elapsed < e) {
            best = Some((out.elapsed, out.backend_time, out.backend_calls));
        }
    }
    let (elapsed, backend, calls) = best.expect("at least one repetition");
    let n = units.len() as f64;
    let wall = elapsed.as_secs_f64();
    Ok(TimingReport {
        k,
        sec_per_summary: wall / n,
        wall_clock_total: wall,
        unit_count: units.len(),
        backend_calls: calls,
        backend_seconds: backend.as_secs_f64(),
        overhead_per_summary: (wall - backend.as_secs_f64()).max(0.0) / n,
        repetitions: repetition_secs,
    })
}
