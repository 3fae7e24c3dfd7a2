use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::llm::{parse_interpretation, render_description, LlmClient};
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::lexical::tokenize;

pub const OFFLINE_TOKENS: usize = 5;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionSource {
    Llm,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDescription {
    pub latent_id: u32,
    pub text: String,
    pub source: DescriptionSource,
    pub model_name: Option<String>,
    pub prompt_digest: String,
}

/// Corpus document frequencies of tokens, for the offline describer.
#[derive(Debug, Clone, Default)]
pub struct TokenStats {
    pub n_docs: usize,
    pub df: HashMap<String, usize>,
}

impl TokenStats {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for p in &corpus.passages {
            let uniq: HashSet<String> = tokenize(&p.text).into_iter().collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        TokenStats { n_docs: corpus.len(), df }
    }

    fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0).max(1);
        (self.n_docs.max(df) as f64 / df as f64).ln()
    }
}

pub enum Describer<'a> {
    Llm(&'a dyn LlmClient),
    Offline(&'a TokenStats),
}

/// Tokens of `passages` ranked by `tf · ln(|D| / df)`, ties alphabetical.
pub fn distinguishing_tokens(passages: &[&str], tokens: &TokenStats, n: usize) -> Vec<(String, f64)> {
    let mut tf: BTreeMap<String, usize> = BTreeMap::new();
    for p in passages {
        for t in tokenize(p) {
            *tf.entry(t).or_default() += 1;
        }
    }
    let mut scored: Vec<(String, f64)> = tf.into_iter().map(|(t, c)| {
        let s = c as f64 * tokens.idf(&t);
        (t, s)
    }).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

/// Describes one latent from its top `(passage, activation)` examples.
pub fn generate_description(latent_id: u32, examples: &[(&str, f32)], describer: &Describer<'_>) -> Result<LatentDescription> {
    if examples.is_empty() {
        return Err(Error::invalid(format!("latent {latent_id}: no passages to describe")));
    }
    let prompt = render_description(examples);
    let prompt_digest = Digest::of(&prompt).to_hex();
    match describer {
        Describer::Llm(client) => {
            let raw = client.complete(&prompt)?;
            Ok(LatentDescription {
                latent_id,
                text: parse_interpretation(&raw)?,
                source: DescriptionSource::Llm,
                model_name: Some(client.model_name().to_string()),
                prompt_digest,
            })
        }
        Describer::Offline(tokens) => {
            let texts: Vec<&str> = examples.iter().map(|e| e.0).collect();
            let top = distinguishing_tokens(&texts, tokens, OFFLINE_TOKENS);
            let text = if top.is_empty() {
                "(no tokens)".to_string()
            } else {
                top.into_iter().map(|t| t.0).collect::<Vec<_>>().join(", ")
            };
            Ok(LatentDescription { latent_id, text, source: DescriptionSource::Offline, model_name: None, prompt_digest })
        }
    }
}

/// One latent's examples, owned so jobs can be built up front.
pub struct DescribeJob {
    pub latent_id: u32,
    pub examples: Vec<(String, f32)>,
}

/// Describes every job with at most `concurrency` client calls in flight.
/// Results come back in latent order whatever order the calls finish in.
pub fn describe_all(jobs: &[DescribeJob], describer: &Describer<'_>, concurrency: usize) -> Vec<(u32, Result<LatentDescription>)> {
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<(usize, Result<LatentDescription>)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = concurrency.max(1).min(jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let ex: Vec<(&str, f32)> = job.examples.iter().map(|(t, a)| (t.as_str(), *a)).collect();
                let r = generate_description(job.latent_id, &ex, describer);
                done.lock().unwrap_or_else(|p| p.into_inner()).push((i, r));
            });
        }
    });
    let mut done = done.into_inner().unwrap_or_else(|p| p.into_inner());
    done.sort_by_key(|(i, _)| jobs[*i].latent_id);
    done.into_iter().map(|(i, r)| (jobs[i].latent_id, r)).collect()
}

pub fn descriptions_to_jsonl(descs: &[LatentDescription]) -> String {
    let mut out = String::new();
    for d in descs {
        writeln!(out, "{}", serde_json::to_string(d).expect("description serialize")).unwrap();
    }
    out
}

pub fn write_descriptions(descs: &[LatentDescription], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, descriptions_to_jsonl(descs)).map_err(|e| Error::io(path, e))
}

pub fn read_descriptions(path: impl AsRef<Path>) -> Result<BTreeMap<u32, LatentDescription>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let d: LatentDescription = serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if d.text.trim().is_empty() {
            return Err(Error::Parse { line: i + 1, message: "empty description text".into() });
        }
        out.insert(d.latent_id, d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Corpus, Passage};

    struct Canned(&'static str);

    impl LlmClient for Canned {
        fn model_name(&self) -> &str {
            "canned"
        }

        fn complete(&self, _prompt: &str) -> Result<String> {
            Ok(self.0.to_string())
        }
    }

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus {
            passages: texts.iter().enumerate().map(|(i, t)| Passage { id: format!("d{i}"), text: t.to_string() }).collect(),
            source_path: String::new(),
        }
    }

    #[test]
    fn offline_picks_rare_repeated_token() {
        let c = corpus(&[
            "the uterus lining and the uterus wall",
            "the uterus during pregnancy",
            "the weather today is mild",
            "the stock market closed",
            "the river flows north",
        ]);
        let tokens = TokenStats::from_corpus(&c);
        let ex = [("the uterus lining and the uterus wall", 3.0), ("the uterus during pregnancy", 2.0)];
        let d = generate_description(4, &ex, &Describer::Offline(&tokens)).unwrap();
        assert_eq!(d.source, DescriptionSource::Offline);
        assert!(d.text.starts_with("uterus"));
        assert!(!d.text.contains("the"));
        let again = generate_description(4, &ex, &Describer::Offline(&tokens)).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn llm_mode_parses_marker() {
        let client = Canned("Patterns...\n[interpretation]: Seasonal identity");
        let d = generate_description(1, &[("spring time", 1.0)], &Describer::Llm(&client)).unwrap();
        assert_eq!(d.text, "Seasonal identity");
        assert_eq!(d.model_name.as_deref(), Some("canned"));
        let bad = Canned("nothing useful");
        assert!(matches!(generate_description(1, &[("x", 1.0)], &Describer::Llm(&bad)), Err(Error::LlmParse { .. })));
        assert!(generate_description(1, &[], &Describer::Llm(&client)).is_err());
    }

    #[test]
    fn describe_all_orders_by_latent() {
        let c = corpus(&["apple pie", "banana bread", "cherry tart"]);
        let tokens = TokenStats::from_corpus(&c);
        let jobs: Vec<DescribeJob> = [9u32, 2, 5, 0]
            .iter()
            .map(|&j| DescribeJob { latent_id: j, examples: vec![(c.passages[j as usize % 3].text.clone(), 1.0)] })
            .collect();
        let out = describe_all(&jobs, &Describer::Offline(&tokens), 3);
        assert_eq!(out.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 2, 5, 9]);
        let serial = describe_all(&jobs, &Describer::Offline(&tokens), 1);
        for (a, b) in out.iter().zip(&serial) {
            assert_eq!(a.1.as_ref().unwrap(), b.1.as_ref().unwrap());
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = LatentDescription { latent_id: 3, text: "x".into(), source: DescriptionSource::Offline, model_name: None, prompt_digest: "ab".into() };
        let p = dir.path().join("d.jsonl");
        write_descriptions(std::slice::from_ref(&d), &p).unwrap();
        assert_eq!(read_descriptions(&p).unwrap()[&3], d);
    }
}
