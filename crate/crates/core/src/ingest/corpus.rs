use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

/// Passages (or queries) in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub passages: Vec<Passage>,
    pub source_path: String,
}

/// Queries share the corpus representation: an id and a text per record.
pub type QuerySet = Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: String,
    contents: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.passages.iter().map(|p| p.id.as_str())
    }

    pub fn get(&self, i: usize) -> &Passage {
        &self.passages[i]
    }

    pub fn parse(input: &str, format: CorpusFormat) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut passages = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line_no = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, text) = match format {
                CorpusFormat::Tsv => {
                    let (id, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "expected `id<TAB>text`".into(),
                    })?;
                    (id.to_string(), text.to_string())
                }
                CorpusFormat::Jsonl => {
                    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                        line: line_no,
                        message: format!("bad JSON record: {e}"),
                    })?;
                    (rec.id, rec.contents)
                }
            };
            if id.is_empty() {
                return Err(Error::Parse { line: line_no, message: "empty id".into() });
            }
            if text.trim().is_empty() {
                return Err(Error::Parse { line: line_no, message: format!("empty text for `{id}`") });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Parse { line: line_no, message: format!("duplicate id `{id}`") });
            }
            passages.push(Passage { id, text });
        }
        Ok(Corpus { passages, source_path: String::new() })
    }

    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.passages {
            if p.id.contains(['\t', '\n']) || p.text.contains(['\t', '\n', '\r']) {
                return Err(Error::invalid(format!("record `{}` cannot be written as TSV", p.id)));
            }
            writeln!(out, "{}\t{}", p.id, p.text).unwrap();
        }
        Ok(out)
    }
}

pub fn read_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Corpus::parse(&text, format)?;
    corpus.source_path = path.display().to_string();
    Ok(corpus)
}

pub fn write_corpus_tsv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, corpus.to_tsv()?).map_err(|e| Error::io(path, e))
}
