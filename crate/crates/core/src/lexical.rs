//! Term-level BM25 baseline and lexical-mismatch query sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{Corpus, Qrels};
use crate::run::{RankedList, SearchResult, SearchStatus};

/// Tokenizer rule, hashed into every term index.
pub const TOKENIZER_RULE: &str = "lowercase; split on every non-alphanumeric char; drop empty; no stemming; no stopwords";

pub fn tokenizer_digest() -> Digest {
    Digest::of(TOKENIZER_RULE)
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

/// `ln(1 + (N − df + 0.5)/(df + 0.5))`.
pub fn idf_rsj(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermIndex {
    pub tokenizer_digest: String,
    pub doc_ids: Vec<String>,
    pub doc_len: Vec<u32>,
    pub avg_doc_len: f64,
    /// term → (doc, tf), sorted by doc.
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl TermIndex {
    pub fn build(exec: Exec, corpus: &Corpus) -> Self {
        let per_doc: Vec<(u32, BTreeMap<String, u32>)> = exec.map_slice(&corpus.passages, |p| {
            let toks = tokenize(&p.text);
            let mut tf = BTreeMap::new();
            for t in &toks {
                *tf.entry(t.clone()).or_insert(0u32) += 1;
            }
            (toks.len() as u32, tf)
        });
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_len = Vec::with_capacity(per_doc.len());
        for (doc, (len, tf)) in per_doc.into_iter().enumerate() {
            doc_len.push(len);
            for (t, c) in tf {
                postings.entry(t).or_default().push((doc as u32, c));
            }
        }
        let avg_doc_len =
            if doc_len.is_empty() { 0.0 } else { doc_len.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_len.len() as f64 };
        TermIndex {
            tokenizer_digest: tokenizer_digest().to_hex(),
            doc_ids: corpus.passages.iter().map(|p| p.id.clone()).collect(),
            doc_len,
            avg_doc_len,
            postings,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn tf(&self, term: &str, doc: u32) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    fn term_weight(&self, tf: u32, doc: u32, idf: f64, params: Bm25Params) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - params.b + params.b * f64::from(self.doc_len[doc as usize]) / self.avg_doc_len;
        idf * tf * (1.0 + params.k1) / (tf + params.k1 * norm)
    }

    /// BM25 of one document; repeated query terms count once per occurrence.
    pub fn score(&self, query_terms: &[String], doc: u32, params: Bm25Params) -> f64 {
        query_terms
            .iter()
            .map(|t| {
                let tf = self.tf(t, doc);
                if tf == 0 {
                    0.0
                } else {
                    self.term_weight(tf, doc, idf_rsj(self.n_docs(), self.df(t)), params)
                }
            })
            .sum()
    }

    /// Exhaustive term-at-a-time scoring of every doc sharing a term.
    pub fn search(&self, query_id: &str, text: &str, top_n: usize, params: Bm25Params) -> SearchResult {
        let terms = tokenize(text);
        if terms.is_empty() {
            return SearchResult {
                status: SearchStatus::EmptyQuery,
                list: RankedList { query_id: query_id.into(), entries: Vec::new() },
            };
        }
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for t in &terms {
            let Some(posting) = self.postings.get(t) else { continue };
            let idf = idf_rsj(self.n_docs(), posting.len());
            for &(doc, tf) in posting {
                *acc.entry(doc).or_insert(0.0) += self.term_weight(tf, doc, idf, params);
            }
        }
        let scored = acc.into_iter().collect();
        let list = RankedList::from_positions(query_id, scored, |d| self.doc_ids[d as usize].as_str(), top_n);
        SearchResult { status: SearchStatus::Ok, list }
    }

    pub fn search_all(&self, exec: Exec, queries: &Corpus, top_n: usize, params: Bm25Params) -> Vec<RankedList> {
        exec.map_slice(&queries.passages, |q| self.search(&q.id, &q.text, top_n, params).list)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self).map_err(|e| Error::invalid(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Loads an index, refusing one built with a different tokenizer.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let index: TermIndex =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(e.column() as u64, format!("term index: {e}")))?;
        if index.tokenizer_digest != tokenizer_digest().to_hex() {
            return Err(Error::invalid(format!(
                "term index at {} was built with tokenizer {}, current is {}",
                path.display(),
                index.tokenizer_digest,
                tokenizer_digest()
            )));
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchSet {
    pub cutoff: usize,
    pub queries: BTreeSet<String>,
    /// Queries with no positive judgment.
    pub excluded_no_positive: usize,
}

/// Queries whose run has no doc with grade ≥ 1 in its top `cutoff`.
pub fn mismatch_set(run: &[RankedList], qrels: &Qrels, cutoff: usize) -> MismatchSet {
    let by_q: HashMap<&str, &RankedList> = run.iter().map(|l| (l.query_id.as_str(), l)).collect();
    let all: BTreeSet<&str> = qrels.query_ids().chain(run.iter().map(|l| l.query_id.as_str())).collect();
    let mut queries = BTreeSet::new();
    let mut excluded = 0;
    for q in all {
        if qrels.positives(q).next().is_none() {
            excluded += 1;
            continue;
        }
        let hit = by_q
            .get(q)
            .is_some_and(|l| l.doc_ids().take(cutoff).any(|d| qrels.grade(q, d).unwrap_or(0) >= 1));
        if !hit {
            queries.insert(q.to_string());
        }
    }
    MismatchSet { cutoff, queries, excluded_no_positive: excluded }
}
