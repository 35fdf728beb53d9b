//! `cloze`: score summaries for factual consistency from the command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cloze_core::extraction::ExtractorRegistry;
use cloze_core::harness::dataset::write_units;
use cloze_core::harness::synthetic::synthetic_corpus;
use cloze_core::harness::{load_dataset, run_go_figure, run_pearson_benchmark, AnnotatedDataset, GoFigureReport};
use cloze_core::masking::{make_training_sample, Granularity};
use cloze_core::pipeline::{SweepRow, ENDPOINT_ENV};
use cloze_core::report::{render, EvalReport, Format, RunTiming};
use cloze_core::scoring::GateScope;
use cloze_core::{Pipeline, PipelineConfig};

#[derive(Parser)]
#[command(name = "cloze", version, about = "Cloze-based factual consistency evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every unit of a dataset and write a JSON report.
    Evaluate(EvaluateArgs),
    /// Score a dataset at several k and tabulate score, time and backend calls.
    SweepK(SweepArgs),
    /// Correlate with human scores and run the error-injection benchmark.
    MetaEval(MetaEvalArgs),
    /// Render a JSON report as markdown or HTML with errors marked.
    Report(ReportArgs),
    /// Emit cloze-training records from gold summaries.
    TrainingSamples(TrainingArgs),
    /// Write a synthetic corpus with known factual structure.
    Synthetic(SyntheticArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file with a full or partial pipeline configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Factors masked per cloze pass.
    #[arg(long)]
    k: Option<usize>,
    /// Confidence threshold of the gate.
    #[arg(long)]
    alpha: Option<f64>,
    /// F1 threshold of the gate.
    #[arg(long)]
    beta: Option<f64>,
    /// summary_level or sentence_level.
    #[arg(long)]
    granularity: Option<Granularity>,
    #[arg(long)]
    extractor: Option<String>,
    /// Extractor option as key=value; repeatable.
    #[arg(long = "extractor-opt", value_name = "KEY=VALUE")]
    extractor_opts: Vec<String>,
    /// gold-reference, document-lookup, mock or remote.
    #[arg(long)]
    backend: Option<String>,
    /// Backend option as key=value; repeatable.
    #[arg(long = "backend-opt", value_name = "KEY=VALUE")]
    backend_opts: Vec<String>,
    /// Endpoint of a remote backend (http://, tcp:// or exec:).
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sentinel: Option<String>,
    /// per_factor or per_summary.
    #[arg(long)]
    gate_scope: Option<GateScope>,
    /// Factors scoring below this are reported as errors.
    #[arg(long)]
    error_threshold: Option<f64>,
}

fn key_value(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_owned(), v.to_owned())),
        _ => bail!("expected KEY=VALUE, got `{s}`"),
    }
}

impl ConfigArgs {
    /// The effective configuration: defaults, then the config file, then flags.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<PipelineConfig>(&text).map_err(cloze_core::Error::from)?
            }
            None => PipelineConfig::default(),
        };
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        if let Some(b) = self.beta {
            c.beta = b;
        }
        if let Some(g) = self.granularity {
            c.granularity = g;
        }
        if let Some(name) = &self.extractor {
            if *name != c.extractor.plugin_name {
                c.extractor.plugin_name = name.clone();
                c.extractor.options.clear();
            }
        }
        for opt in &self.extractor_opts {
            let (k, v) = key_value(opt)?;
            c.extractor.options.insert(k, v);
        }
        if let Some(name) = &self.backend {
            if *name != c.backend.name {
                c.backend.name = name.clone();
                c.backend.options.clear();
                c.backend.endpoint = None;
            }
        }
        for opt in &self.backend_opts {
            let (k, v) = key_value(opt)?;
            c.backend.options.insert(k, v);
        }
        // resolve the endpoint here so the echoed config names it
        if c.backend.name == "remote" {
            if let Some(e) = &self.endpoint {
                c.backend.endpoint = Some(e.clone());
            }
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(d) = &self.cache_dir {
            c.cache_dir = Some(d.clone());
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(s) = &self.sentinel {
            c.sentinel = s.clone();
        }
        if let Some(g) = self.gate_scope {
            c.gate_scope = g;
        }
        if let Some(t) = self.error_threshold {
            c.error_threshold = t;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset in JSON lines.
    input: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write a per-unit CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    input: PathBuf,
    /// Values of k, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    ks: Vec<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct MetaEvalArgs {
    /// Datasets with human scores, for the correlation table.
    datasets: Vec<PathBuf>,
    /// Corpus with gold summaries for the error-injection benchmark.
    #[arg(long)]
    go_figure: Option<PathBuf>,
    /// Seeds of the injected errors and the random-text lower bound.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by `evaluate`.
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// markdown or html; guessed from the output extension when omitted.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct TrainingArgs {
    /// Dataset whose units carry gold summaries.
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 50)]
    units: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".timing.json");
    PathBuf::from(name)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let dataset = load_dataset(&args.input)?;
    let pipeline = Pipeline::new(config.clone())?;
    let out = pipeline.evaluate(&dataset.units)?;
    let timing = RunTiming::from(&out);
    let report = EvalReport::new(config, pipeline.backend_identity(), out.results);
    log::info!(
        "{} units, mean score {:.4}, {} backend calls in {:.3}s",
        report.unit_count,
        report.corpus_mean,
        timing.backend_calls,
        timing.elapsed_secs
    );
    write_output(args.output.as_deref(), &report.to_json()?)?;
    if let Some(path) = &args.output {
        fs::write(sidecar(path), to_json(&timing)?)?;
    }
    if let Some(path) = &args.csv {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(io::BufWriter::new(f))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepOutput {
    config: PipelineConfig,
    backend_identity: String,
    unit_count: usize,
    rows: Vec<SweepRow>,
}

fn sweep_k(args: &SweepArgs) -> Result<()> {
    if args.ks.is_empty() {
        bail!("no values of k given");
    }
    let config = args.config.resolve()?;
    let dataset = load_dataset(&args.input)?;
    let pipeline = Pipeline::new(config.clone())?;
    let rows = pipeline.sweep_k(&dataset.units, &args.ks)?;
    let mut table = String::from("k\tscore\tseconds\tbackend_calls\n");
    for r in &rows {
        table.push_str(&format!("{}\t{:.4}\t{:.4}\t{}\n", r.k, r.score, r.seconds, r.backend_calls));
    }
    let output = SweepOutput {
        config,
        backend_identity: pipeline.backend_identity(),
        unit_count: dataset.units.len(),
        rows,
    };
    match &args.output {
        Some(path) => {
            write_output(Some(path), &to_json(&output)?)?;
            eprint!("{table}");
        }
        None => print!("{table}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct PearsonRow {
    dataset: String,
    r: f64,
    p: f64,
    n: usize,
}

#[derive(Serialize)]
struct MetaEvalOutput {
    config: PipelineConfig,
    backend_identity: String,
    pearson: Vec<PearsonRow>,
    go_figure: Option<GoFigureReport>,
}

fn meta_eval(args: &MetaEvalArgs) -> Result<()> {
    if args.datasets.is_empty() && args.go_figure.is_none() {
        bail!("nothing to do: give annotated datasets and/or --go-figure");
    }
    let config = args.config.resolve()?;
    let pipeline = Pipeline::new(config.clone())?;
    let mut summary = String::new();
    let mut pearson = Vec::new();
    for path in &args.datasets {
        let annotated = AnnotatedDataset::try_from(load_dataset(path)?)
            .with_context(|| format!("dataset {}", path.display()))?;
        let bench = run_pearson_benchmark(&pipeline, &annotated)?;
        summary.push_str(&format!(
            "{}\tr = {:.4}\tp = {:.3e}\tn = {}\n",
            bench.dataset, bench.r, bench.p, bench.n
        ));
        pearson.push(PearsonRow {
            dataset: bench.dataset,
            r: bench.r,
            p: bench.p,
            n: bench.n,
        });
    }
    let go_figure = match &args.go_figure {
        Some(path) => {
            let corpus = load_dataset(path)?;
            let g = run_go_figure(&pipeline, &corpus.units, &args.seeds)?;
            summary.push_str(&format!("upper bound\t{:.4}\n", g.upper_bound));
            for (level, s) in &g.level_scores {
                let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.4}"));
                summary.push_str(&format!(
                    "level {level}\tentity {}\tnon-entity {}\n",
                    fmt(s.entity),
                    fmt(s.non_entity)
                ));
            }
            summary.push_str(&format!("lower bound\t{:.4}\n", g.lower_bound));
            summary.push_str(&format!(
                "sensitivity\tr = {:.4}\tp = {:.3e}\n",
                g.sensitivity_correlation, g.p_value
            ));
            Some(g)
        }
        None => None,
    };
    let output = MetaEvalOutput {
        config,
        backend_identity: pipeline.backend_identity(),
        pearson,
        go_figure,
    };
    match &args.output {
        Some(path) => {
            write_output(Some(path), &to_json(&output)?)?;
            eprint!("{summary}");
        }
        None => print!("{summary}"),
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let report = EvalReport::from_json(&text)?;
    let format = args.format.unwrap_or_else(|| {
        let html = args
            .output
            .as_ref()
            .and_then(|p| p.extension())
            .is_some_and(|e| e == "html" || e == "htm");
        if html {
            Format::Html
        } else {
            Format::Markdown
        }
    });
    write_output(args.output.as_deref(), &render(&report, format))
}

fn training_samples(args: &TrainingArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let dataset = load_dataset(&args.input)?;
    let extractor = ExtractorRegistry::default().build(&config.extractor)?;
    let mut lines = String::new();
    let mut skipped = 0;
    for (i, unit) in dataset.units.iter().enumerate() {
        let gold = unit.gold_summary.as_deref().unwrap_or(&unit.summary);
        let seed = config.seed.wrapping_add(i as u64);
        match make_training_sample(&unit.document, gold, extractor.as_ref(), &config.sentinel, seed) {
            Ok(sample) => {
                lines.push_str(&serde_json::to_string(&sample)?);
                lines.push('\n');
            }
            Err(cloze_core::Error::NoFactors) => {
                log::warn!("unit {}: no factual factors, skipped", unit.id);
                skipped += 1;
            }
            Err(e) => return Err(e).with_context(|| format!("unit {}", unit.id)),
        }
    }
    log::info!("{} samples, {skipped} units skipped", dataset.units.len() - skipped);
    write_output(args.output.as_deref(), &lines)
}

fn synthetic(args: &SyntheticArgs) -> Result<()> {
    write_units(&args.output, &synthetic_corpus(args.units, args.seed))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::SweepK(a) => sweep_k(a),
        Command::MetaEval(a) => meta_eval(a),
        Command::Report(a) => report(a),
        Command::TrainingSamples(a) => training_samples(a),
        Command::Synthetic(a) => synthetic(a),
    }
}

/// Machine-readable failure record, one JSON object on stderr.
fn error_record(err: &anyhow::Error) -> serde_json::Value {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<cloze_core::Error>())
        .map_or("error", |e| e.kind());
    serde_json::json!({ "error": kind, "message": format!("{err:#}") })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_record(&err));
            ExitCode::FAILURE
        }
    }
}
