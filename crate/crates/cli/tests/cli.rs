use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cloze(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloze"))
        .args(args)
        .env_remove("CLOZE_BACKEND_ENDPOINT")
        .output()
        .expect("spawn cloze")
}

fn ok(args: &[&str]) -> Output {
    let out = cloze(args);
    assert!(
        out.status.success(),
        "cloze {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// The document as typeset, hyphenated across a line break.
const ADELAIDE: &str = r#"{"id":"adelaide","document":"England coach peter moores talks to the news media during a press conference at the ade-laide oval on sunday.","summary":"Peter moores talks to the adelaide oval on sunday."}"#;

#[test]
fn misattributed_factor_lowers_the_score() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.jsonl");
    fs::write(&input, format!("{ADELAIDE}\n")).unwrap();
    let output = dir.path().join("report.json");
    ok(&["evaluate", p(&input), "-o", p(&output), "--backend", "document-lookup"]);

    let report = read_json(&output);
    let unit = &report["units"][0]["score"];
    assert!(unit["cloze_score"].as_f64().unwrap() < 1.0, "{unit:#}");
    let factor = unit["factor_scores"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["gold_surface"] == "the adelaide oval")
        .expect("factor extracted");
    assert_eq!(factor["filled_surface"], "");
    assert_eq!(factor["contribution"], 0.0);
    assert!(!unit["error_spans"].as_array().unwrap().is_empty());
    assert!(output.with_extension("json.timing.json").exists());
}

#[test]
fn empty_input_is_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    fs::write(&input, "").unwrap();
    let out = cloze(&["evaluate", p(&input)]);
    assert!(!out.status.success());
    let record: Value = serde_json::from_slice(&out.stderr).expect("JSON error record");
    assert_eq!(record["error"], "parse_error");
}

#[test]
fn bad_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    fs::write(&input, format!("{ADELAIDE}\n{{not json\n")).unwrap();
    let out = cloze(&["evaluate", p(&input)]);
    assert!(!out.status.success());
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(record["message"].as_str().unwrap().contains(":2:"), "{record}");
}

#[test]
fn unreachable_backend_names_the_unit() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.jsonl");
    fs::write(&input, format!("{ADELAIDE}\n")).unwrap();
    // bind then drop a listener so the port is closed
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("tcp://127.0.0.1:{port}");
    let out = cloze(&[
        "evaluate",
        p(&input),
        "--backend",
        "remote",
        "--endpoint",
        &endpoint,
        "--backend-opt",
        "retries=0",
    ]);
    assert!(!out.status.success());
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "backend_unavailable");
    assert!(record["message"].as_str().unwrap().contains("adelaide"), "{record}");
}

fn synthetic(dir: &Path, units: usize) -> std::path::PathBuf {
    let path = dir.join("corpus.jsonl");
    ok(&["synthetic", "--units", &units.to_string(), "--seed", "4", "-o", p(&path)]);
    path
}

#[test]
fn gold_reference_on_clean_units_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), 3);
    let output = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    ok(&["evaluate", p(&input), "-o", p(&output), "--csv", p(&csv), "--backend", "gold-reference"]);
    let report = read_json(&output);
    assert_eq!(report["corpus_mean"], 1.0);
    assert_eq!(report["unit_count"], 3);
    assert_eq!(report["config"]["backend"]["name"], "gold-reference");
    let csv = fs::read_to_string(csv).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("unit_id,cloze_score,"));
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), 3);
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"k": 3, "alpha": 0.25, "backend": {"name": "mock"}}"#).unwrap();
    let output = dir.path().join("report.json");
    ok(&["evaluate", p(&input), "-o", p(&output), "--config", p(&config), "--beta", "0.75"]);
    let c = &read_json(&output)["config"];
    assert_eq!(c["k"], 3);
    assert_eq!(c["alpha"], 0.25);
    assert_eq!(c["beta"], 0.75);
    assert_eq!(c["sentinel"], "[MASK]");
    assert_eq!(c["granularity"], "sentence_level");
    assert_eq!(c["backend"]["name"], "mock");
}

#[test]
fn invalid_k_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), 3);
    let out = cloze(&["evaluate", p(&input), "--k", "0"]);
    assert!(!out.status.success());
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "invalid_k");
}

#[test]
fn sweep_rows_follow_k() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), 5);
    let output = dir.path().join("sweep.json");
    ok(&[
        "sweep-k",
        p(&input),
        "--ks",
        "1,2,4",
        "--granularity",
        "summary_level",
        "--backend",
        "mock",
        "-o",
        p(&output),
    ]);
    let rows = read_json(&output)["rows"].as_array().unwrap().clone();
    let calls: Vec<u64> = rows.iter().map(|r| r["backend_calls"].as_u64().unwrap()).collect();
    // nine factors per unit
    assert_eq!(calls, vec![45, 25, 15]);

    // the k = 1 row agrees with evaluate
    let report = dir.path().join("report.json");
    ok(&["evaluate", p(&input), "-o", p(&report), "--granularity", "summary_level", "--backend", "mock"]);
    assert_eq!(rows[0]["score"], read_json(&report)["corpus_mean"]);
}

#[test]
fn report_renders_markers() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.jsonl");
    fs::write(&input, format!("{ADELAIDE}\n")).unwrap();
    let report = dir.path().join("report.json");
    ok(&["evaluate", p(&input), "-o", p(&report), "--backend", "document-lookup"]);

    let md = dir.path().join("report.md");
    ok(&["report", p(&report), "-o", p(&md)]);
    let md = fs::read_to_string(md).unwrap();
    assert!(md.contains(r"**\[\[the adelaide oval\]\]**"), "{md}");
    assert!(md.contains(r"\[None\]"));

    let html = dir.path().join("report.html");
    ok(&["report", p(&report), "-o", p(&html)]);
    let html = fs::read_to_string(html).unwrap();
    assert!(html.contains(r#"<mark class="error">the adelaide oval</mark>"#), "{html}");
}

#[test]
fn meta_eval_writes_both_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic(dir.path(), 12);
    // human scores: a clean unit scores 1, a unit with a foreign name lower
    let annotated = dir.path().join("annotated.jsonl");
    let lines: Vec<String> = fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let mut v: Value = serde_json::from_str(line).unwrap();
            let summary = v["summary"].as_str().unwrap().to_owned();
            let bad = i % 3;
            let mut s = summary;
            for _ in 0..bad {
                s = s.replacen(" met ", " met Zed Quill and ", 1);
            }
            v["summary"] = Value::String(s);
            v["human_score"] = Value::from(1.0 - bad as f64 / 4.0);
            v.to_string()
        })
        .collect();
    fs::write(&annotated, lines.join("\n") + "\n").unwrap();

    let output = dir.path().join("meta.json");
    ok(&[
        "meta-eval",
        p(&annotated),
        "--go-figure",
        p(&corpus),
        "--backend",
        "document-lookup",
        "-o",
        p(&output),
    ]);
    let meta = read_json(&output);
    assert_eq!(meta["pearson"][0]["n"], 12);
    assert!(meta["pearson"][0]["r"].as_f64().unwrap() > 0.9);
    let g = &meta["go_figure"];
    assert!(g["sensitivity_correlation"].as_f64().unwrap() <= -0.99);
    assert_eq!(g["level_scores"].as_object().unwrap().len(), 3);
}

#[test]
fn training_samples_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), 4);
    let output = dir.path().join("train.jsonl");
    ok(&["training-samples", p(&input), "-o", p(&output), "--seed", "9"]);
    let text = fs::read_to_string(&output).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let masked = v["masked_text"].as_str().unwrap();
        let targets = v["targets"].as_array().unwrap();
        assert!(!targets.is_empty());
        assert_eq!(masked.matches("[MASK]").count(), targets.len());
        assert!(v["document"].is_string());
    }
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic(dir.path(), 8);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        ok(&["evaluate", p(&input), "-o", p(out), "--backend", "document-lookup", "--workers", "3"]);
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}
