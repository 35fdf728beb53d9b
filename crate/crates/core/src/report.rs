//! Evaluation reports: JSON, CSV, and human-readable renderings with
//! inconsistent factors marked.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use crate::error::Result;
use crate::pipeline::{mean, PipelineConfig, RunOutput, UnitResult};
use crate::types::Span;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// The effective configuration, after defaulting.
    pub config: PipelineConfig,
    pub backend_identity: String,
    pub unit_count: usize,
    pub corpus_mean: f64,
    /// Units for which no factor was extracted.
    pub no_factor_units: usize,
    pub units: Vec<UnitResult>,
}

impl EvalReport {
    pub fn new(config: PipelineConfig, backend_identity: String, units: Vec<UnitResult>) -> Self {
        Self {
            config,
            backend_identity,
            unit_count: units.len(),
            corpus_mean: mean(units.iter().map(|u| u.score.cloze_score)),
            no_factor_units: units.iter().filter(|u| u.score.no_factors).count(),
            units,
        }
    }

    /// Pretty JSON; identical runs give byte-identical output.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per unit.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit_id", "cloze_score", "factors", "flagged", "passes", "no_factors"])
            .map_err(csv_err)?;
        for u in &self.units {
            w.write_record([
                u.score.unit_id.clone(),
                u.score.cloze_score.to_string(),
                u.score.factor_scores.len().to_string(),
                u.score.error_spans.len().to_string(),
                u.passes.to_string(),
                u.score.no_factors.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}

/// Wall-clock figures of one run; kept apart from [`EvalReport`] so the
/// report itself stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub elapsed_secs: f64,
    pub sec_per_summary: f64,
    pub backend_calls: u64,
    pub backend_secs: f64,
}

impl From<&RunOutput> for RunTiming {
    fn from(out: &RunOutput) -> Self {
        let elapsed = out.elapsed.as_secs_f64();
        Self {
            elapsed_secs: elapsed,
            sec_per_summary: elapsed / out.results.len().max(1) as f64,
            backend_calls: out.backend_calls,
            backend_secs: out.backend_time.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Html,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "html" => Ok(Format::Html),
            other => Err(format!("unknown report format `{other}` (markdown or html)")),
        }
    }
}

pub fn render(report: &EvalReport, format: Format) -> String {
    match format {
        Format::Markdown => render_markdown(report),
        Format::Html => render_html(report),
    }
}

/// Splits `text` into `(segment, is_error)` pieces around the error spans.
fn segments<'a>(text: &'a str, spans: &[Span]) -> Vec<(&'a str, bool)> {
    let mut spans: Vec<Span> = spans
        .iter()
        .copied()
        .filter(|s| s.end <= text.len() && text.is_char_boundary(s.start) && text.is_char_boundary(s.end))
        .collect();
    spans.sort();
    let mut out = Vec::new();
    let mut cursor = 0;
    for s in spans {
        if s.start < cursor {
            continue;
        }
        if s.start > cursor {
            out.push((&text[cursor..s.start], false));
        }
        out.push((&text[s.range()], true));
        cursor = s.end;
    }
    if cursor < text.len() {
        out.push((&text[cursor..], false));
    }
    out
}

fn md_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '\\' | '*' | '_' | '[' | ']' | '`' | '|' | '<' | '>' | '#') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn or_none(s: &str) -> &str {
    if s.is_empty() {
        "[None]"
    } else {
        s
    }
}

/// Markdown with inconsistent factors written as `**[[factor]]**`.
pub fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Factual consistency report\n");
    let _ = writeln!(
        out,
        "Backend `{}`, k = {}, {} granularity, alpha = {}, beta = {}.\n",
        report.backend_identity, report.config.k, report.config.granularity, report.config.alpha, report.config.beta
    );
    let _ = writeln!(out, "Units: {}. Mean score: {:.4}.\n", report.unit_count, report.corpus_mean);
    for u in &report.units {
        let s = &u.score;
        let _ = writeln!(out, "## {} (score {:.4})\n", md_escape(&s.unit_id), s.cloze_score);
        let mut line = String::new();
        for (seg, is_error) in segments(&u.summary, &s.error_spans) {
            if is_error {
                let _ = write!(line, "**\\[\\[{}\\]\\]**", md_escape(seg));
            } else {
                line.push_str(&md_escape(seg));
            }
        }
        let _ = writeln!(out, "{line}\n");
        if s.no_factors {
            let _ = writeln!(out, "_No factual factors were extracted._\n");
            continue;
        }
        let _ = writeln!(out, "| # | summary factor | cloze answer | F1 | confidence | score | error |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for f in &s.factor_scores {
            let flagged = s.error_spans.contains(&f.span);
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.2} | {:.2} | {:.1} | {} |",
                f.factor_index,
                md_escape(&f.gold_surface),
                md_escape(or_none(&f.filled_surface)),
                f.f1,
                f.confidence,
                f.contribution,
                if flagged { "yes" } else { "" }
            );
        }
        out.push('\n');
    }
    out
}

/// Standalone HTML with inconsistent factors in `<mark class="error">`.
pub fn render_html(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
    out.push_str("<title>Factual consistency report</title>\n<style>\n");
    out.push_str("mark.error { background: #f8c4c4; }\ntable { border-collapse: collapse; }\n");
    out.push_str("td, th { border: 1px solid #ccc; padding: 2px 6px; }\n</style>\n</head>\n<body>\n");
    let _ = writeln!(out, "<h1>Factual consistency report</h1>");
    let _ = writeln!(
        out,
        "<p>Backend <code>{}</code>, k = {}, {} granularity, alpha = {}, beta = {}. Units: {}. Mean score: {:.4}.</p>",
        html_escape(&report.backend_identity),
        report.config.k,
        report.config.granularity,
        report.config.alpha,
        report.config.beta,
        report.unit_count,
        report.corpus_mean
    );
    for u in &report.units {
        let s = &u.score;
        let _ = writeln!(
            out,
            "<section>\n<h2>{} (score {:.4})</h2>",
            html_escape(&s.unit_id),
            s.cloze_score
        );
        out.push_str("<p>");
        for (seg, is_error) in segments(&u.summary, &s.error_spans) {
            if is_error {
                let _ = write!(out, "<mark class=\"error\">{}</mark>", html_escape(seg));
            } else {
                out.push_str(&html_escape(seg));
            }
        }
        out.push_str("</p>\n");
        if s.no_factors {
            out.push_str("<p><em>No factual factors were extracted.</em></p>\n</section>\n");
            continue;
        }
        out.push_str("<table>\n<tr><th>#</th><th>summary factor</th><th>cloze answer</th><th>F1</th><th>confidence</th><th>score</th><th>error</th></tr>\n");
        for f in &s.factor_scores {
            let flagged = s.error_spans.contains(&f.span);
            let _ = writeln!(
                out,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{:.2}</td><td>{:.2}</td><td>{:.1}</td><td>{}</td></tr>",
                f.factor_index,
                html_escape(&f.gold_surface),
                html_escape(or_none(&f.filled_surface)),
                f.f1,
                f.confidence,
                f.contribution,
                if flagged { "yes" } else { "" }
            );
        }
        out.push_str("</table>\n</section>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}
