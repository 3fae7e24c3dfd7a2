//! Pluggable text-completion client plus the two prompt templates and the
//! parsers for their answer lines.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::error::{Error, Result};

pub const INTRUSION_TEMPLATE: &str = include_str!("../../assets/intrusion_prompt.txt");
pub const DESCRIPTION_TEMPLATE: &str = include_str!("../../assets/description_prompt.txt");

pub const INTRUDER_MARKER: &str = "[intruder]:";
pub const INTERPRETATION_MARKER: &str = "[interpretation]:";

pub trait LlmClient: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Expands a template. The one line wrapped in `<...>` is repeated per item,
/// with `\n` inside it standing for a newline.
fn render(template: &str, items: &[Vec<(&str, String)>]) -> String {
    let mut out = String::new();
    for line in template.lines() {
        let t = line.trim();
        if t.len() > 2 && t.starts_with('<') && t.ends_with('>') {
            let body = t[1..t.len() - 1].replace("\\n", "\n");
            for fields in items {
                let mut s = body.clone();
                for (k, v) in fields {
                    s = s.replace(&format!("{{{k}}}"), v);
                }
                out.push_str(&s);
                out.push('\n');
            }
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

/// Intrusion prompt over `passages`, numbered from 1.
pub fn render_intrusion(passages: &[&str]) -> String {
    let items: Vec<_> = passages
        .iter()
        .enumerate()
        .map(|(i, p)| vec![("i", (i + 1).to_string()), ("passage", one_line(p))])
        .collect();
    render(INTRUSION_TEMPLATE, &items)
}

/// Description prompt over `(passage, activation)` examples, numbered from 1.
pub fn render_description(examples: &[(&str, f32)]) -> String {
    let items: Vec<_> = examples
        .iter()
        .enumerate()
        .map(|(i, (p, a))| vec![("i", (i + 1).to_string()), ("passage", one_line(p)), ("act", format!("{a:.3}"))])
        .collect();
    render(DESCRIPTION_TEMPLATE, &items)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn last_marked<'a>(raw: &'a str, marker: &'static str) -> Option<&'a str> {
    raw.lines().rev().find_map(|l| l.trim().strip_prefix(marker).map(str::trim))
}

pub fn parse_interpretation(raw: &str) -> Result<String> {
    match last_marked(raw, INTERPRETATION_MARKER) {
        Some(t) if !t.is_empty() => Ok(t.to_string()),
        _ => Err(Error::LlmParse { marker: INTERPRETATION_MARKER, raw: raw.to_string() }),
    }
}

/// 1-based document number from an `[intruder]:Document#n` line.
pub fn parse_intruder(raw: &str) -> Result<usize> {
    let err = || Error::LlmParse { marker: INTRUDER_MARKER, raw: raw.to_string() };
    let rest = last_marked(raw, INTRUDER_MARKER).ok_or_else(err)?;
    let rest = rest.trim_matches('"').trim();
    let rest = rest.strip_prefix("Document").unwrap_or(rest).trim_start_matches(['#', ' ']);
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok().filter(|&n| n >= 1).ok_or_else(err)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt_digest: String,
    #[serde(default)]
    pub prompt: String,
    pub response: String,
}

/// Answers from a recorded JSONL fixture, keyed by prompt digest.
pub struct ReplayClient {
    model: String,
    responses: HashMap<String, String>,
}

impl ReplayClient {
    pub fn new(model: impl Into<String>, exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        ReplayClient {
            model: model.into(),
            responses: exchanges.into_iter().map(|e| (e.prompt_digest, e.response)).collect(),
        }
    }

    pub fn from_jsonl(model: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ex = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            ex.push(serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
        }
        Ok(Self::new(model, ex))
    }
}

impl LlmClient for ReplayClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let key = Digest::of(prompt).to_hex();
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::LlmTransport(format!("no recorded response for prompt {}", &key[..12])))
    }
}

/// Wraps a client and appends every exchange to a JSONL log.
pub struct RecordingClient<C> {
    inner: C,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C, path: impl Into<PathBuf>) -> Self {
        RecordingClient { inner, path: path.into(), lock: Mutex::new(()) }
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let response = self.inner.complete(prompt)?;
        let ex = Exchange { prompt_digest: Digest::of(prompt).to_hex(), prompt: prompt.to_string(), response: response.clone() };
        let line = serde_json::to_string(&ex).expect("exchange serialize");
        let _g = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        Ok(response)
    }
}

/// Credentials for [`HttpClient`] come from this variable only.
pub const API_KEY_ENV: &str = "LATENTIR_LLM_API_KEY";

/// OpenAI-compatible chat completions endpoint.
#[cfg(feature = "http-llm")]
pub struct HttpClient {
    endpoint: String,
    model: String,
    key: Option<String>,
    http: reqwest::blocking::Client,
}

#[cfg(feature = "http-llm")]
impl HttpClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| Error::LlmTransport(e.to_string()))?;
        Ok(HttpClient { endpoint: endpoint.into(), model: model.into(), key: std::env::var(API_KEY_ENV).ok(), http })
    }
}

#[cfg(feature = "http-llm")]
impl LlmClient for HttpClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": 0,
        });
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| Error::LlmTransport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::LlmTransport(format!("endpoint returned {status}")));
        }
        let v: serde_json::Value = resp.json().map_err(|e| Error::LlmTransport(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::LlmTransport("response has no choices[0].message.content".into()))
    }
}
