//! Model adapters: pre-computed predictions or a line-delimited JSON child
//! process.
//!
//! Subprocess protocol: the harness writes `{"item_id", "prompt"}` as one
//! line on the child's stdin and waits for one `{"item_id", "answer"}` line
//! on its stdout. One request is in flight at a time.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const DEFAULT_TIMEOUT_SECONDS: f64 = 30.0;

/// How the harness reaches the model under test.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AdapterSpec {
    Offline {
        predictions_path: PathBuf,
    },
    Subprocess {
        command: Vec<String>,
        timeout_seconds: f64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdapterSpec {
    mode: String,
    predictions_path: Option<PathBuf>,
    command: Option<Vec<String>>,
    timeout_seconds: Option<f64>,
}

impl AdapterSpec {
    /// Parse the JSON form, requiring exactly the chosen mode's fields.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawAdapterSpec = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("adapter spec: {e}")))?;
        match raw.mode.as_str() {
            "offline" => {
                if raw.command.is_some() || raw.timeout_seconds.is_some() {
                    return Err(Error::validation(
                        "offline adapter spec must not set command or timeout_seconds",
                    ));
                }
                let predictions_path = raw
                    .predictions_path
                    .ok_or_else(|| Error::validation("offline adapter needs predictions_path"))?;
                Ok(AdapterSpec::Offline { predictions_path })
            }
            "subprocess" => {
                if raw.predictions_path.is_some() {
                    return Err(Error::validation(
                        "subprocess adapter spec must not set predictions_path",
                    ));
                }
                let command = raw
                    .command
                    .filter(|c| !c.is_empty())
                    .ok_or_else(|| Error::validation("subprocess adapter needs a command"))?;
                let timeout_seconds = raw.timeout_seconds.unwrap_or(DEFAULT_TIMEOUT_SECONDS);
                if !(timeout_seconds.is_finite() && timeout_seconds > 0.0) {
                    return Err(Error::validation("timeout_seconds must be > 0"));
                }
                Ok(AdapterSpec::Subprocess { command, timeout_seconds })
            }
            other => Err(Error::validation(format!("unknown adapter mode {other:?}"))),
        }
    }

    /// Accepts `offline:<path>`, `subprocess:<cmd> [args..]`, inline JSON,
    /// or a path to a JSON spec file. Relative paths inside a spec file
    /// resolve against the file's directory.
    pub fn parse_cli(arg: &str) -> Result<Self> {
        if let Some(path) = arg.strip_prefix("offline:") {
            return Ok(AdapterSpec::Offline { predictions_path: PathBuf::from(path) });
        }
        if let Some(cmd) = arg.strip_prefix("subprocess:") {
            let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if command.is_empty() {
                return Err(Error::validation("subprocess adapter needs a command"));
            }
            return Ok(AdapterSpec::Subprocess { command, timeout_seconds: DEFAULT_TIMEOUT_SECONDS });
        }
        if arg.trim_start().starts_with('{') {
            return Self::from_json(arg);
        }
        let path = Path::new(arg);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_json(&text)?;
        if let AdapterSpec::Offline { predictions_path } = &mut spec {
            if predictions_path.is_relative() {
                *predictions_path = path.parent().unwrap_or(Path::new("")).join(&*predictions_path);
            }
        }
        Ok(spec)
    }

    pub fn connect(&self) -> Result<Adapter> {
        match self {
            AdapterSpec::Offline { predictions_path } => {
                Ok(Adapter::Offline(OfflineAdapter::load(predictions_path)?))
            }
            AdapterSpec::Subprocess { command, timeout_seconds } => Ok(Adapter::Subprocess(
                SubprocessAdapter::spawn(command, Duration::from_secs_f64(*timeout_seconds))?,
            )),
        }
    }
}

/// What the model said about one item.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Answer { text: String, latency: Option<f64> },
    Missing,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub item_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_seconds: Option<f64>,
}

/// Predictions looked up by `(task_id, item_id)`, falling back to `item_id`.
#[derive(Debug, Clone, Default)]
pub struct OfflineAdapter {
    by_task: HashMap<(String, String), (String, Option<f64>)>,
    by_item: HashMap<String, (String, Option<f64>)>,
}

impl OfflineAdapter {
    pub fn from_predictions(preds: Vec<Prediction>) -> Self {
        let mut a = OfflineAdapter::default();
        for p in preds {
            let value = (p.answer, p.latency_seconds);
            match p.task_id {
                Some(t) => a.by_task.insert((t, p.item_id), value),
                None => a.by_item.insert(p.item_id, value),
            };
        }
        a
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_predictions(jsonl::read_jsonl(path)?))
    }

    pub fn lookup(&self, task_id: &str, item_id: &str) -> Reply {
        let hit = self
            .by_task
            .get(&(task_id.to_string(), item_id.to_string()))
            .or_else(|| self.by_item.get(item_id));
        match hit {
            Some((text, latency)) => Reply::Answer { text: text.clone(), latency: *latency },
            None => Reply::Missing,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    item_id: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct Response {
    item_id: String,
    answer: String,
}

/// A long-lived child process answering one request per line.
pub struct SubprocessAdapter {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl SubprocessAdapter {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::validation("empty adapter command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Adapter(format!("failed to spawn {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(SubprocessAdapter { child, stdin, lines: rx, timeout })
    }

    /// Send one request and wait for the matching answer. Answers for other
    /// ids (late replies to timed-out requests) are discarded.
    pub fn ask(&mut self, item_id: &str, prompt: &str) -> Result<Reply> {
        let mut line = serde_json::to_string(&Request { item_id, prompt })
            .expect("request is serializable");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Adapter(format!("writing item {item_id:?} to adapter: {e}")))?;

        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(remaining) {
                Ok(Ok(text)) => {
                    if text.trim().is_empty() {
                        continue;
                    }
                    let resp: Response = serde_json::from_str(&text).map_err(|e| {
                        Error::Adapter(format!("malformed adapter output for item {item_id:?}: {e}"))
                    })?;
                    if resp.item_id != item_id {
                        log::warn!("discarding stale answer for item {:?}", resp.item_id);
                        continue;
                    }
                    return Ok(Reply::Answer { text: resp.answer, latency: None });
                }
                Ok(Err(e)) => {
                    return Err(Error::Adapter(format!(
                        "reading adapter output for item {item_id:?}: {e}"
                    )))
                }
                Err(RecvTimeoutError::Timeout) => return Ok(Reply::Timeout),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Adapter(format!(
                        "adapter exited before answering item {item_id:?}"
                    )))
                }
            }
        }
    }
}

impl Drop for SubprocessAdapter {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub enum Adapter {
    Offline(OfflineAdapter),
    Subprocess(SubprocessAdapter),
}
