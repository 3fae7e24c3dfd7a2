use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Graded relevance judgments, `query → doc → grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later inserts of the same pair overwrite earlier ones.
    pub fn insert(&mut self, qid: impl Into<String>, docid: impl Into<String>, grade: u32) {
        self.entries.entry(qid.into()).or_default().insert(docid.into(), grade);
    }

    pub fn grade(&self, qid: &str, docid: &str) -> Option<u32> {
        self.entries.get(qid)?.get(docid).copied()
    }

    pub fn for_query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(qid)
    }

    /// Docs with grade ≥ 1 for the query.
    pub fn positives<'a>(&'a self, qid: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .get(qid)
            .into_iter()
            .flat_map(|m| m.iter().filter(|(_, &g)| g >= 1).map(|(d, _)| d.as_str()))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Judgments of the listed queries only.
    pub fn restrict<'a>(&self, queries: impl IntoIterator<Item = &'a String>) -> Qrels {
        let entries = queries
            .into_iter()
            .filter_map(|q| self.entries.get(q).map(|m| (q.clone(), m.clone())))
            .collect();
        Qrels { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parse(input: &str) -> Result<Self> {
        let mut q = Qrels::new();
        for (i, line) in input.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() < 4 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected `qid iter docid grade`, got {} fields", fields.len()),
                });
            }
            let grade: i64 = fields[3].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("grade `{}` is not an integer", fields[3]),
            })?;
            if grade < 0 {
                return Err(Error::Parse { line: i + 1, message: format!("negative grade {grade}") });
            }
            q.insert(fields[0], fields[2], grade as u32);
        }
        Ok(q)
    }

    pub fn to_trec_string(&self) -> String {
        let mut out = String::new();
        for (qid, docs) in &self.entries {
            for (doc, grade) in docs {
                writeln!(out, "{qid} 0 {doc} {grade}").unwrap();
            }
        }
        out
    }
}

pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Qrels::parse(&text)
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, qrels.to_trec_string()).map_err(|e| Error::io(path, e))
}
