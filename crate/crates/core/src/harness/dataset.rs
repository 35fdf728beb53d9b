//! Line-delimited JSON datasets.
//!
//! Each line holds one unit: `{"id", "document", "summary", "human_score"?,
//! "gold_summary"?}`. `human_score` may be a number or a list of numbers
//! (per-sentence annotations, say) that the manifest's aggregation reduces
//! to one value.
//!
//! A dataset `foo.jsonl` may have a manifest `foo.manifest.json`:
//! `{"name": "...", "human_score_scale": {"min": 1, "max": 5}, "aggregation": "mean"}`.
//! Human scores are mapped from the declared scale onto `[0, 1]` at load time.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::EvalUnit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreScale {
    fn default() -> Self {
        Self { min: 0.0, max: 1.0 }
    }
}

impl ScoreScale {
    fn normalize(&self, v: f64) -> Option<f64> {
        let (lo, hi) = (self.min.min(self.max), self.min.max(self.max));
        if !v.is_finite() || v < lo || v > hi {
            return None;
        }
        Some(((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0))
    }
}

/// How a list-valued human score becomes a single number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
    Max,
}

impl Aggregation {
    pub fn apply(&self, values: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub human_score_scale: ScoreScale,
    #[serde(default)]
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub units: Vec<EvalUnit>,
}

/// A dataset in which every unit carries a human score.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDataset {
    pub name: String,
    pub units: Vec<EvalUnit>,
}

impl TryFrom<Dataset> for AnnotatedDataset {
    type Error = Error;

    fn try_from(d: Dataset) -> Result<Self> {
        if d.units.len() < 3 {
            return Err(Error::DegenerateInput(format!(
                "dataset {} has {} units; correlation needs at least 3",
                d.name,
                d.units.len()
            )));
        }
        if let Some(u) = d.units.iter().find(|u| u.human_score.is_none()) {
            return Err(Error::InvalidUnit {
                id: u.id.clone(),
                reason: "annotated dataset requires a human score".into(),
            });
        }
        Ok(Self {
            name: d.name,
            units: d.units,
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawScore {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    document: String,
    summary: String,
    #[serde(default)]
    human_score: Option<RawScore>,
    #[serde(default)]
    gold_summary: Option<String>,
}

/// `foo.jsonl` -> `foo.manifest.json`.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    dataset.with_file_name(format!("{stem}.manifest.json"))
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let mpath = manifest_path(path);
    match fs::read_to_string(&mpath) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: mpath.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest {
            name: path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("dataset")
                .to_owned(),
            human_score_scale: ScoreScale::default(),
            aggregation: Aggregation::default(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Loads a dataset and its manifest (if any).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(path)?;
    let aggregation = manifest.aggregation;
    load_dataset_with(path, &manifest, &|v| aggregation.apply(v))
}

/// Loads a dataset with a custom aggregation for list-valued human scores.
pub fn load_dataset_with(path: &Path, manifest: &Manifest, aggregate: &dyn Fn(&[f64]) -> f64) -> Result<Dataset> {
    let display = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: display.clone(),
        line,
        message,
    };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut units = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let human_score = match rec.human_score {
            None => None,
            Some(raw) => {
                let value = match raw {
                    RawScore::One(v) => v,
                    RawScore::Many(vs) if vs.is_empty() => {
                        return Err(parse_err(lineno, "human_score list is empty".into()))
                    }
                    RawScore::Many(vs) => aggregate(&vs),
                };
                let scale = manifest.human_score_scale;
                Some(scale.normalize(value).ok_or_else(|| {
                    parse_err(
                        lineno,
                        format!("human_score {value} outside the declared scale [{}, {}]", scale.min, scale.max),
                    )
                })?)
            }
        };
        let unit = EvalUnit {
            id: rec.id,
            document: rec.document,
            summary: rec.summary,
            human_score,
            gold_summary: rec.gold_summary,
        };
        unit.validate().map_err(|e| parse_err(lineno, e.to_string()))?;
        if !seen.insert(unit.id.clone()) {
            return Err(parse_err(lineno, format!("duplicate unit id {}", unit.id)));
        }
        units.push(unit);
    }
    if units.is_empty() {
        return Err(parse_err(0, "file contains no units".into()));
    }
    Ok(Dataset {
        name: manifest.name.clone(),
        units,
    })
}

/// Writes units as JSON lines.
pub fn write_units(path: &Path, units: &[EvalUnit]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for u in units {
        serde_json::to_writer(&mut out, u)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
