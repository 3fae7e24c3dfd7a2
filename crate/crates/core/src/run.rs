//! Ranked result lists and the TREC run-file layout
//! (`qid Q0 docid rank score tag`).

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Whether a search ran or had nothing to search with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Ok,
    /// The query had no terms (lexical) or no active latents (concept).
    EmptyQuery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub status: SearchStatus,
    pub list: RankedList,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

/// Score descending, then doc id ascending.
pub fn rank_cmp(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
    /// Sorts `scored` by score (ties by doc id) and keeps the first `top_n`.
    pub fn from_scores(query_id: impl Into<String>, mut scored: Vec<(String, f64)>, top_n: usize) -> Self {
        if scored.len() > top_n && top_n > 0 {
            scored.select_nth_unstable_by(top_n - 1, rank_cmp);
            scored.truncate(top_n);
        } else if top_n == 0 {
            scored.clear();
        }
        scored.sort_by(rank_cmp);
        RankedList { query_id: query_id.into(), entries: scored }
    }

    /// Like [`RankedList::from_scores`] over doc positions; ids are only
    /// materialized for the kept entries.
    pub fn from_positions<'a>(query_id: impl Into<String>, mut scored: Vec<(u32, f64)>, id: impl Fn(u32) -> &'a str, top_n: usize) -> Self {
        let cmp = |a: &(u32, f64), b: &(u32, f64)| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| id(a.0).cmp(id(b.0)));
        if top_n == 0 {
            scored.clear();
        } else if scored.len() > top_n {
            scored.select_nth_unstable_by(top_n - 1, cmp);
            scored.truncate(top_n);
        }
        scored.sort_by(cmp);
        RankedList { query_id: query_id.into(), entries: scored.into_iter().map(|(d, s)| (id(d).to_string(), s)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(d, _)| d.as_str())
    }

    /// 1-based rank of `doc_id`, if present.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.entries.iter().position(|(d, _)| d == doc_id).map(|p| p + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for w in self.entries.windows(2) {
            if w[1].1 > w[0].1 {
                return Err(Error::invalid(format!("ranked list for `{}` has increasing scores", self.query_id)));
            }
        }
        for (d, _) in &self.entries {
            if !seen.insert(d.as_str()) {
                return Err(Error::invalid(format!("ranked list for `{}` repeats doc `{d}`", self.query_id)));
            }
        }
        Ok(())
    }
}

pub fn run_to_trec(run: &[RankedList], tag: &str) -> String {
    let mut out = String::new();
    for list in run {
        for (rank, (doc, score)) in list.entries.iter().enumerate() {
            writeln!(out, "{} Q0 {} {} {} {}", list.query_id, doc, rank + 1, score, tag).unwrap();
        }
    }
    out
}

/// Parses a run file; entries are re-sorted by score within each query and
/// queries keep first-appearance order.
pub fn parse_trec_run(input: &str) -> Result<Vec<RankedList>> {
    let mut lists: Vec<RankedList> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (i, line) in input.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() < 6 {
            return Err(Error::Parse { line: i + 1, message: "expected `qid Q0 docid rank score tag`".into() });
        }
        let score: f64 = f[4]
            .parse()
            .map_err(|_| Error::Parse { line: i + 1, message: format!("bad score `{}`", f[4]) })?;
        let slot = *index.entry(f[0].to_string()).or_insert_with(|| {
            lists.push(RankedList { query_id: f[0].to_string(), entries: Vec::new() });
            lists.len() - 1
        });
        lists[slot].entries.push((f[2].to_string(), score));
    }
    for l in &mut lists {
        l.entries.sort_by(rank_cmp);
    }
    Ok(lists)
}

pub fn write_trec_run(run: &[RankedList], tag: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, run_to_trec(run, tag)).map_err(|e| Error::io(path, e))
}

pub fn read_trec_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trec_run(&text)
}
