//! Out-of-process plug-ins speaking line-delimited JSON over stdio.
//!
//! Each request is one JSON object on one line; the child answers with one
//! line. Requests carry `text` (plus `image` for captioning, `query` and
//! `context` for answering); responses carry `vector`, `keywords`,
//! `description` or `answer`, or an `error` string.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::hca::Captioner;
use crate::index::{Embedder, KeywordExtractor};

pub struct PluginProcess {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl std::fmt::Debug for PluginProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PluginProcess").field("command", &self.command).finish_non_exhaustive()
    }
}

impl PluginProcess {
    pub fn spawn(command: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Plugin {
                command: command.to_owned(),
                message: format!("cannot start: {e}"),
            })?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            command: command.to_owned(),
            child,
            stdin,
            stdout,
        })
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Plugin {
            command: self.command.clone(),
            message: message.into(),
        }
    }

    /// Sends one request and reads one response line.
    pub fn request(&mut self, request: &Value) -> Result<Value> {
        let mut line = request.to_string();
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or_else(|| Error::Plugin {
            command: self.command.clone(),
            message: "stdin closed".into(),
        })?;
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|()| stdin.flush()) {
            return Err(self.fail(format!("write failed: {e}")));
        }
        let mut reply = String::new();
        match self.stdout.read_line(&mut reply) {
            Ok(0) => return Err(self.fail("exited without replying")),
            Ok(_) => {}
            Err(e) => return Err(self.fail(format!("read failed: {e}"))),
        }
        let value: Value = serde_json::from_str(&reply).map_err(|e| self.fail(format!("bad reply: {e}")))?;
        if let Some(message) = value.get("error").and_then(Value::as_str) {
            return Err(self.fail(message.to_owned()));
        }
        Ok(value)
    }

    fn field<T: for<'de> Deserialize<'de>>(&mut self, request: &Value, name: &str) -> Result<T> {
        let mut reply = self.request(request)?;
        let value = reply
            .get_mut(name)
            .map(Value::take)
            .ok_or_else(|| self.fail(format!("reply lacks `{name}`")))?;
        serde_json::from_value(value).map_err(|e| self.fail(format!("bad `{name}`: {e}")))
    }
}

impl Drop for PluginProcess {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved child exit on EOF.
        drop(self.stdin.take());
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

fn lock(process: &Mutex<PluginProcess>) -> std::sync::MutexGuard<'_, PluginProcess> {
    process.lock().unwrap_or_else(std::sync::PoisonError::into_inner)
}

/// Embedder backed by a child process. The dimension is probed at spawn.
#[derive(Debug)]
pub struct ExternalEmbedder {
    process: Mutex<PluginProcess>,
    dim: usize,
    name: String,
}

impl ExternalEmbedder {
    pub fn spawn(command: &str, args: &[String]) -> Result<Self> {
        let mut process = PluginProcess::spawn(command, args)?;
        let probe: Vec<f32> = process.field(&json!({ "text": "dimension probe" }), "vector")?;
        if probe.is_empty() {
            return Err(process.fail("probe returned an empty vector"));
        }
        Ok(Self {
            dim: probe.len(),
            name: format!("external:{command}"),
            process: Mutex::new(process),
        })
    }
}

impl Embedder for ExternalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let vector: Vec<f32> = lock(&self.process).field(&json!({ "text": text }), "vector")?;
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                index: self.dim,
                embedder: vector.len(),
            });
        }
        Ok(vector)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug)]
pub struct ExternalKeywordExtractor {
    process: Mutex<PluginProcess>,
}

impl ExternalKeywordExtractor {
    pub fn spawn(command: &str, args: &[String]) -> Result<Self> {
        Ok(Self {
            process: Mutex::new(PluginProcess::spawn(command, args)?),
        })
    }
}

impl KeywordExtractor for ExternalKeywordExtractor {
    fn extract(&self, text: &str) -> Result<BTreeSet<String>> {
        let keywords: Vec<String> = lock(&self.process).field(&json!({ "text": text }), "keywords")?;
        Ok(keywords.into_iter().map(|k| k.trim().to_lowercase()).filter(|k| !k.is_empty()).collect())
    }
}

#[derive(Debug)]
pub struct ExternalCaptioner {
    process: Mutex<PluginProcess>,
}

impl ExternalCaptioner {
    pub fn spawn(command: &str, args: &[String]) -> Result<Self> {
        Ok(Self {
            process: Mutex::new(PluginProcess::spawn(command, args)?),
        })
    }
}

impl Captioner for ExternalCaptioner {
    fn caption(&self, file_ref: &str, context: &str) -> std::result::Result<String, Box<dyn std::error::Error + Send + Sync>> {
        let description: String = lock(&self.process).field(&json!({ "image": file_ref, "text": context }), "description")?;
        Ok(description)
    }
}

/// Answers a query from retrieved context passages.
#[derive(Debug)]
pub struct AnswerAdapter {
    process: PluginProcess,
}

impl AnswerAdapter {
    pub fn spawn(command: &str, args: &[String]) -> Result<Self> {
        Ok(Self {
            process: PluginProcess::spawn(command, args)?,
        })
    }

    pub fn answer(&mut self, query: &str, context: &[String]) -> Result<String> {
        self.process.field(&json!({ "text": query, "query": query, "context": context }), "answer")
    }
}
