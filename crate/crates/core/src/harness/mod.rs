//! Meta-evaluation: how well does the metric track human judgments and
//! injected errors, and what does it cost?

pub mod dataset;
pub mod go_figure;
pub mod stats;
pub mod synthetic;
pub mod timing;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::Pipeline;
pub use dataset::{load_dataset, AnnotatedDataset, Dataset, Manifest};
pub use go_figure::{run_go_figure, CorruptedUnit, ErrorInjector, ErrorKind, GoFigureReport};
pub use stats::{pearson_r, Pearson};
pub use timing::{time_pipeline, TimingReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub unit_id: String,
    pub human_score: f64,
    pub cloze_score: f64,
    pub no_factors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonBenchmark {
    pub dataset: String,
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub rows: Vec<BenchmarkRow>,
}

/// Scores every unit and correlates the scores with the human judgments.
pub fn run_pearson_benchmark(pipeline: &Pipeline, dataset: &AnnotatedDataset) -> Result<PearsonBenchmark> {
    let out = pipeline.evaluate(&dataset.units)?;
    let rows: Vec<BenchmarkRow> = dataset
        .units
        .iter()
        .zip(&out.results)
        .map(|(u, r)| BenchmarkRow {
            unit_id: u.id.clone(),
            human_score: u.human_score.unwrap_or_default(),
            cloze_score: r.score.cloze_score,
            no_factors: r.score.no_factors,
        })
        .collect();
    let human: Vec<f64> = rows.iter().map(|r| r.human_score).collect();
    let metric: Vec<f64> = rows.iter().map(|r| r.cloze_score).collect();
    let corr = pearson_r(&metric, &human)?;
    Ok(PearsonBenchmark {
        dataset: dataset.name.clone(),
        r: corr.r,
        p: corr.p,
        n: corr.n,
        rows,
    })
}
