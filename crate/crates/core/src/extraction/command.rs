//! Adapter for out-of-process extractors (e.g. a statistical NER pipeline).
//!
//! The child process reads one JSON object per line on stdin,
//! `{"text": "..."}`, and answers with one line on stdout,
//! `{"spans": [{"start": 0, "end": 5, "kind": "named_entity", "label": "PERSON"}]}`.
//! Offsets are Unicode code-point offsets, which is what Python string
//! indices give; they are converted to byte offsets here.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::{ExtractorConfig, Extractor, PluginError, RawSpan};
use crate::types::{FactorKind, Span};

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    spans: Vec<WireSpan>,
}

#[derive(Deserialize)]
struct WireSpan {
    start: usize,
    end: usize,
    kind: FactorKind,
    #[serde(default)]
    label: String,
}

struct Pipes {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Extractor backed by a long-running child process.
///
/// Options: `command` (program to run, required) and `args`
/// (whitespace-separated arguments).
pub struct CommandExtractor {
    program: String,
    pipes: Mutex<Pipes>,
}

impl std::fmt::Debug for CommandExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CommandExtractor").field("program", &self.program).finish()
    }
}

impl CommandExtractor {
    pub const NAME: &'static str = "command";

    pub fn spawn(program: &str, args: &[&str]) -> Result<Self, PluginError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start `{program}`: {e}"))?;
        let stdin = child.stdin.take().ok_or("child has no stdin")?;
        let stdout = BufReader::new(child.stdout.take().ok_or("child has no stdout")?);
        Ok(Self {
            program: program.to_owned(),
            pipes: Mutex::new(Pipes { child, stdin, stdout }),
        })
    }

    pub fn from_config(cfg: &ExtractorConfig) -> Result<Self, PluginError> {
        let program = cfg
            .options
            .get("command")
            .ok_or("the command extractor needs a `command` option")?;
        let args: Vec<&str> = cfg
            .options
            .get("args")
            .map(|a| a.split_whitespace().collect())
            .unwrap_or_default();
        Self::spawn(program, &args)
    }
}

impl Drop for CommandExtractor {
    fn drop(&mut self) {
        if let Ok(pipes) = self.pipes.get_mut() {
            let _ = pipes.child.kill();
            let _ = pipes.child.wait();
        }
    }
}

/// Byte offset of every code point, plus the end of the string.
fn codepoint_to_byte(text: &str) -> Vec<usize> {
    text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect()
}

impl Extractor for CommandExtractor {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn extract(&self, summary: &str) -> Result<Vec<RawSpan>, PluginError> {
        let mut line = serde_json::to_string(&Request { text: summary })?;
        line.push('\n');
        let mut reply = String::new();
        {
            let mut pipes = self.pipes.lock().map_err(|_| "extractor pipe poisoned")?;
            pipes.stdin.write_all(line.as_bytes())?;
            pipes.stdin.flush()?;
            if pipes.stdout.read_line(&mut reply)? == 0 {
                return Err(format!("`{}` closed its output", self.program).into());
            }
        }
        let response: Response = serde_json::from_str(reply.trim_end())?;
        let offsets = codepoint_to_byte(summary);
        response
            .spans
            .into_iter()
            .map(|w| {
                let (Some(&start), Some(&end)) = (offsets.get(w.start), offsets.get(w.end)) else {
                    return Err(format!("span [{},{}) outside the text", w.start, w.end).into());
                };
                if start >= end {
                    return Err(format!("empty span [{},{})", w.start, w.end).into());
                }
                Ok(RawSpan::new(summary, Span::new(start, end), w.kind, w.label))
            })
            .collect()
    }
}
