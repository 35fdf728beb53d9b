//! End-to-end evaluation: extract, mask, fill, score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::backend::{
    check_fills, CachedBackend, ClozeBackend, ClozeFill, ClozeRequest, CountingBackend, DocumentLookupOracle,
    FillCache, GoldReferenceOracle, MockBackend, MockMode, RemoteBackend, RemoteConfig, Transport,
};
use crate::error::{Error, Result};
use crate::extraction::{extract_factors, Concurrency, Extractor, ExtractorConfig, ExtractorRegistry};
use crate::masking::{plan_masks, render_masked, Granularity, DEFAULT_SENTINEL};
use crate::scoring::{score_unit, GateConfig, GateScope, UnitScore, DEFAULT_ERROR_THRESHOLD};
use crate::types::{EvalUnit, FactualFactor};

/// Environment variable consulted for a remote endpoint when none is configured.
pub const ENDPOINT_ENV: &str = "CLOZE_BACKEND_ENDPOINT";

/// Which backend fills the blanks, plus its settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// `gold-reference`, `document-lookup`, `mock` or `remote`.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub options: BTreeMap<String, String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::named("document-lookup")
    }
}

impl BackendConfig {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint: None,
            options: BTreeMap::new(),
        }
    }

    pub fn with_option(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.options.insert(key.into(), value.into());
        self
    }

    fn option<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.options
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidConfig(format!("backend option {key}={v} is not valid")))
            })
            .transpose()
    }

    /// Instantiates the configured backend.
    pub fn build(&self) -> Result<Arc<dyn ClozeBackend>> {
        match self.name.as_str() {
            "gold-reference" => Ok(Arc::new(GoldReferenceOracle)),
            "document-lookup" => Ok(Arc::new(DocumentLookupOracle)),
            "mock" => {
                let mode = match self.options.get("mode").map(String::as_str) {
                    None | Some("echo") => MockMode::Echo,
                    Some("abstain") => MockMode::Abstain,
                    Some(other) => match other.strip_prefix("fixed:") {
                        Some(text) => MockMode::Fixed(text.to_owned()),
                        None => return Err(Error::InvalidConfig(format!("unknown mock mode `{other}`"))),
                    },
                };
                let probability = self.option::<f64>("probability")?.unwrap_or(1.0);
                if !(0.0..=1.0).contains(&probability) {
                    return Err(Error::InvalidConfig(format!("mock probability {probability} outside [0,1]")));
                }
                let latency = Duration::from_micros(self.option::<u64>("latency_us")?.unwrap_or(0));
                Ok(Arc::new(MockBackend {
                    mode,
                    probability,
                    latency,
                }))
            }
            "remote" => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("remote backend needs an endpoint (or {ENDPOINT_ENV})"))
                    })?;
                let transport = Transport::parse(&endpoint).map_err(Error::InvalidConfig)?;
                let mut cfg = RemoteConfig::new(transport);
                if let Some(n) = self.option::<usize>("max_in_flight")? {
                    cfg.max_in_flight = n.max(1);
                }
                if let Some(n) = self.option::<usize>("retries")? {
                    cfg.retries = n;
                }
                if let Some(ms) = self.option::<u64>("timeout_ms")? {
                    cfg.timeout = Duration::from_millis(ms);
                }
                Ok(Arc::new(RemoteBackend::new(cfg)))
            }
            other => Err(Error::InvalidConfig(format!("unknown backend `{other}`"))),
        }
    }
}

fn default_k() -> usize {
    1
}

fn default_threshold() -> f64 {
    0.5
}

fn default_granularity() -> Granularity {
    Granularity::SentenceLevel
}

fn default_sentinel() -> String {
    DEFAULT_SENTINEL.to_owned()
}

fn default_error_threshold() -> f64 {
    DEFAULT_ERROR_THRESHOLD
}

/// Every knob of an evaluation run. Omitted fields take their defaults
/// when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_threshold")]
    pub alpha: f64,
    #[serde(default = "default_threshold")]
    pub beta: f64,
    #[serde(default = "default_granularity")]
    pub granularity: Granularity,
    #[serde(default)]
    pub extractor: ExtractorConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_sentinel")]
    pub sentinel: String,
    #[serde(default)]
    pub gate_scope: GateScope,
    #[serde(default = "default_error_threshold")]
    pub error_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            alpha: default_threshold(),
            beta: default_threshold(),
            granularity: default_granularity(),
            extractor: ExtractorConfig::default(),
            backend: BackendConfig::default(),
            cache_dir: None,
            workers: 0,
            sentinel: default_sentinel(),
            gate_scope: GateScope::default(),
            error_threshold: default_error_threshold(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn gate(&self) -> GateConfig {
        GateConfig {
            alpha: self.alpha,
            beta: self.beta,
            scope: self.gate_scope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidK(0));
        }
        self.gate().validate()?;
        if !(0.0..=1.0).contains(&self.error_threshold) {
            return Err(Error::InvalidConfig(format!(
                "error_threshold must lie in [0,1], got {}",
                self.error_threshold
            )));
        }
        if self.sentinel.trim().is_empty() {
            return Err(Error::InvalidConfig("sentinel must not be empty".into()));
        }
        Ok(())
    }
}

/// A unit with its factors extracted, ready to be scored at any `k`.
#[derive(Debug, Clone)]
pub struct PreparedUnit {
    pub unit: EvalUnit,
    pub factors: Vec<FactualFactor>,
    /// Gold factor surfaces, present only for reference-based backends.
    pub reference: Option<Vec<String>>,
    pub extraction_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitResult {
    pub summary: String,
    pub passes: usize,
    pub score: UnitScore,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: Vec<UnitResult>,
    /// Invocations of the underlying backend (cache hits excluded).
    pub backend_calls: u64,
    pub backend_time: Duration,
    pub elapsed: Duration,
}

impl RunOutput {
    pub fn mean_score(&self) -> f64 {
        mean(self.results.iter().map(|r| r.score.cloze_score))
    }

    pub fn passes(&self) -> usize {
        self.results.iter().map(|r| r.passes).sum()
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

enum Extractors {
    Shared(Arc<dyn Extractor>),
    PerWorker {
        registry: ExtractorRegistry,
        idle: Mutex<Vec<Arc<dyn Extractor>>>,
    },
}

type Counted = Arc<CountingBackend<Arc<dyn ClozeBackend>>>;

/// A configured evaluator. Cheap to reuse across many runs.
pub struct Pipeline {
    config: PipelineConfig,
    extractors: Extractors,
    counter: Counted,
    backend: Arc<dyn ClozeBackend>,
    cached: Option<Arc<CachedBackend<Counted>>>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let backend = config.backend.build()?;
        Self::with_backend(config, backend)
    }

    /// Uses `backend` instead of the one named in the config.
    pub fn with_backend(config: PipelineConfig, backend: Arc<dyn ClozeBackend>) -> Result<Self> {
        Self::with_registry(config, backend, ExtractorRegistry::default())
    }

    pub fn with_registry(
        config: PipelineConfig,
        backend: Arc<dyn ClozeBackend>,
        registry: ExtractorRegistry,
    ) -> Result<Self> {
        config.validate()?;
        let extractors = match registry.concurrency(&config.extractor.plugin_name)? {
            Concurrency::Shared => Extractors::Shared(registry.build(&config.extractor)?),
            Concurrency::PerWorker => {
                // build one up front so configuration errors surface early
                let first = registry.build(&config.extractor)?;
                Extractors::PerWorker {
                    registry,
                    idle: Mutex::new(vec![first]),
                }
            }
        };
        let counter: Counted = Arc::new(CountingBackend::new(backend));
        let (backend, cached): (Arc<dyn ClozeBackend>, _) = match &config.cache_dir {
            Some(dir) => {
                let cached = Arc::new(CachedBackend::new(counter.clone(), FillCache::open(dir)?));
                (cached.clone(), Some(cached))
            }
            None => (counter.clone(), None),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            config,
            extractors,
            counter,
            backend,
            cached,
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backend_identity(&self) -> String {
        self.backend.identity()
    }

    /// Cache hit count, if a cache is configured.
    pub fn cache_hits(&self) -> Option<u64> {
        self.cached.as_ref().map(|c| c.cache().hits())
    }

    pub fn backend_calls(&self) -> u64 {
        self.counter.calls()
    }

    fn with_extractor<T>(&self, f: impl FnOnce(&dyn Extractor) -> Result<T>) -> Result<T> {
        match &self.extractors {
            Extractors::Shared(e) => f(e.as_ref()),
            Extractors::PerWorker { registry, idle } => {
                let taken = idle.lock().unwrap_or_else(|e| e.into_inner()).pop();
                let extractor = match taken {
                    Some(e) => e,
                    None => registry.build(&self.config.extractor)?,
                };
                let out = f(extractor.as_ref());
                idle.lock().unwrap_or_else(|e| e.into_inner()).push(extractor);
                out
            }
        }
    }

    /// Extracts the factors of `text`.
    pub fn extract(&self, text: &str) -> Result<Vec<FactualFactor>> {
        self.with_extractor(|e| extract_factors(e, text))
    }

    /// Validates and extracts one unit. Extraction failures are logged and
    /// leave the unit without factors.
    pub fn prepare_unit(&self, unit: &EvalUnit) -> Result<PreparedUnit> {
        unit.validate()?;
        let (factors, extraction_failed) = match self.extract(&unit.summary) {
            Ok(f) => (f, false),
            Err(e @ Error::ExtractorFailure { .. }) => {
                log::warn!("unit {}: {e}; scoring without factors", unit.id);
                (Vec::new(), true)
            }
            Err(e) => return Err(e),
        };
        let reference = if self.backend.needs_reference() {
            match &unit.gold_summary {
                Some(gold) => Some(self.extract(gold)?.into_iter().map(|f| f.surface).collect()),
                None => None,
            }
        } else {
            None
        };
        Ok(PreparedUnit {
            unit: unit.clone(),
            factors,
            reference,
            extraction_failed,
        })
    }

    pub fn prepare(&self, units: &[EvalUnit]) -> Result<Vec<PreparedUnit>> {
        self.pool
            .install(|| units.par_iter().map(|u| self.prepare_unit(u)).collect())
    }

    /// Fills and scores an already extracted unit with `k` factors per pass.
    pub fn score_prepared(&self, prepared: &PreparedUnit, k: usize) -> Result<UnitResult> {
        let unit = &prepared.unit;
        let factors = &prepared.factors;
        let plan = plan_masks(&unit.id, factors, k, self.config.granularity)?;
        let mut fills: Vec<ClozeFill> = Vec::with_capacity(factors.len());
        for g in 0..plan.groups.len() {
            let masked = render_masked(unit, factors, &plan, g, &self.config.sentinel);
            let mut request = ClozeRequest::new(format!("{}#{g}", unit.id), unit.document.clone(), masked);
            request.reference = prepared.reference.clone();
            let backend_err = |source| Error::Backend {
                unit_id: unit.id.clone(),
                source,
            };
            let answer = self.backend.fill(&request).map_err(backend_err)?;
            check_fills(&request, &answer).map_err(backend_err)?;
            fills.extend(answer);
        }
        let mut score = score_unit(&unit.id, factors, &fills, &self.config.gate())?;
        score.relocalize(self.config.error_threshold);
        Ok(UnitResult {
            summary: unit.summary.clone(),
            passes: plan.pass_count(),
            score,
        })
    }

    /// Scores prepared units in parallel, preserving input order.
    pub fn score_all(&self, prepared: &[PreparedUnit], k: usize) -> Result<RunOutput> {
        let calls_before = self.counter.calls();
        let busy_before = self.counter.busy();
        let started = Instant::now();
        let results: Vec<UnitResult> = self
            .pool
            .install(|| prepared.par_iter().map(|p| self.score_prepared(p, k)).collect::<Result<_>>())?;
        Ok(RunOutput {
            results,
            backend_calls: self.counter.calls() - calls_before,
            backend_time: self.counter.busy().saturating_sub(busy_before),
            elapsed: started.elapsed(),
        })
    }

    /// Full evaluation with the configured `k`.
    pub fn evaluate(&self, units: &[EvalUnit]) -> Result<RunOutput> {
        self.evaluate_k(units, self.config.k)
    }

    /// Full evaluation (extraction included) with `k` factors per pass.
    pub fn evaluate_k(&self, units: &[EvalUnit], k: usize) -> Result<RunOutput> {
        let started = Instant::now();
        let calls_before = self.counter.calls();
        let busy_before = self.counter.busy();
        let prepared = self.prepare(units)?;
        let mut out = self.score_all(&prepared, k)?;
        out.elapsed = started.elapsed();
        out.backend_calls = self.counter.calls() - calls_before;
        out.backend_time = self.counter.busy().saturating_sub(busy_before);
        Ok(out)
    }

    pub fn evaluate_one(&self, unit: &EvalUnit) -> Result<UnitResult> {
        let prepared = self.prepare_unit(unit)?;
        self.score_prepared(&prepared, self.config.k)
    }

    /// Runs every `k` over one extraction of the corpus.
    pub fn sweep_k(&self, units: &[EvalUnit], ks: &[usize]) -> Result<Vec<SweepRow>> {
        if ks.is_empty() {
            return Err(Error::InvalidConfig("k range is empty".into()));
        }
        let prepared = self.prepare(units)?;
        ks.iter()
            .map(|&k| {
                let out = self.score_all(&prepared, k)?;
                Ok(SweepRow {
                    k,
                    score: out.mean_score(),
                    seconds: out.elapsed.as_secs_f64(),
                    backend_calls: out.backend_calls,
                    passes: out.passes(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub score: f64,
    pub seconds: f64,
    pub backend_calls: u64,
    pub passes: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_one() -> EvalUnit {
        EvalUnit::new(
            "t1",
            "Peter Moores talks to the news media at the Adelaide Oval on Sunday. England lost.",
            "Peter moores talks to the adelaide oval on sunday.",
        )
    }

    fn config(backend: &str) -> PipelineConfig {
        PipelineConfig {
            backend: BackendConfig::named(backend),
            workers: 1,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.k, c.alpha, c.beta), (1, 0.5, 0.5));
        assert_eq!(c.granularity, Granularity::SentenceLevel);
        assert_eq!(c.sentinel, "[MASK]");
        let parsed: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn document_lookup_on_consistent_summary() {
        let unit = EvalUnit::new("u", "Alice Brown visited Paris on Monday.", "Alice Brown visited Paris.");
        let p = Pipeline::new(config("document-lookup")).unwrap();
        let r = p.evaluate_one(&unit).unwrap();
        assert_eq!(r.score.cloze_score, 1.0);
        assert!(r.score.error_spans.is_empty());
    }

    #[test]
    fn gold_reference_needs_gold_summary() {
        let unit = table_one();
        let gold = "Peter moores talks to the news media on sunday.";
        let p = Pipeline::new(config("gold-reference")).unwrap();
        let without = p.evaluate_one(&unit).unwrap();
        assert!(without.score.factor_scores.iter().all(|f| f.filled_surface.is_empty()));
        let with = p.evaluate_one(&unit.clone().with_gold_summary(gold)).unwrap();
        let gold_factors = p.extract(gold).unwrap();
        assert!(!gold_factors.is_empty());
        for (fs, g) in with.score.factor_scores.iter().zip(&gold_factors) {
            assert_eq!(fs.filled_surface, g.surface);
        }
    }

    #[test]
    fn calls_follow_the_plan() {
        let unit = EvalUnit::new(
            "u",
            "Alice Brown met Bob Stone in Paris. Carol White stayed in Rome.",
            "Alice Brown met Bob Stone in Paris. Carol White stayed in Rome.",
        );
        let mut cfg = config("mock");
        cfg.granularity = Granularity::SummaryLevel;
        let p = Pipeline::new(cfg).unwrap();
        let rows = p.sweep_k(&[unit], &[1, 2, 5]).unwrap();
        let calls: Vec<u64> = rows.iter().map(|r| r.backend_calls).collect();
        assert_eq!(calls, [5, 3, 1]);
    }

    #[test]
    fn unknown_names_are_config_errors() {
        assert!(matches!(Pipeline::new(config("nope")), Err(Error::InvalidConfig(_))));
        let mut cfg = config("mock");
        cfg.extractor = ExtractorConfig::named("spacy");
        assert!(matches!(Pipeline::new(cfg), Err(Error::UnknownExtractor(_))));
        let mut cfg = config("mock");
        cfg.k = 0;
        assert!(matches!(Pipeline::new(cfg), Err(Error::InvalidK(0))));
    }
}
