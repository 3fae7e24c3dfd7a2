//! IR effectiveness metrics over ranked runs and graded qrels.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Qrels;
use crate::run::RankedList;

/// Gain applied to a relevance grade in DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Gain {
    /// `gain(rel) = rel`, the trec_eval `ndcg_cut` convention.
    #[default]
    Linear,
    /// `gain(rel) = 2^rel − 1`.
    Exponential,
}

impl Gain {
    fn apply(self, rel: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(rel),
            Gain::Exponential => 2f64.powi(rel as i32) - 1.0,
        }
    }
}

/// Per-query values and their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    pub query_count: usize,
    /// Judged queries with no ranked list; they score 0.
    pub missing_from_run: usize,
    /// Queries dropped because they have no relevant document.
    pub excluded_unjudged: usize,
}

impl EvalReport {
    fn finish(metric: String, per_query: BTreeMap<String, f64>, missing: usize, excluded: usize) -> Self {
        let n = per_query.len();
        let mean = if n == 0 { 0.0 } else { per_query.values().sum::<f64>() / n as f64 };
        EvalReport { metric, per_query, mean, query_count: n, missing_from_run: missing, excluded_unjudged: excluded }
    }
}

fn index_run(run: &[RankedList]) -> HashMap<&str, &RankedList> {
    run.iter().map(|l| (l.query_id.as_str(), l)).collect()
}

/// Walks queries with at least one positive judgment.
fn judged_queries(qrels: &Qrels) -> (Vec<&str>, usize) {
    let mut judged = Vec::new();
    let mut excluded = 0;
    for q in qrels.query_ids() {
        if qrels.positives(q).next().is_some() {
            judged.push(q);
        } else {
            excluded += 1;
        }
    }
    (judged, excluded)
}

pub fn mrr_at_k(run: &[RankedList], qrels: &Qrels, k: usize) -> EvalReport {
    let by_q = index_run(run);
    let (judged, excluded) = judged_queries(qrels);
    let mut per = BTreeMap::new();
    let mut missing = 0;
    for q in judged {
        let v = match by_q.get(q) {
            None => {
                missing += 1;
                0.0
            }
            Some(list) => list
                .doc_ids()
                .take(k)
                .position(|d| qrels.grade(q, d).unwrap_or(0) >= 1)
                .map_or(0.0, |p| 1.0 / (p + 1) as f64),
        };
        per.insert(q.to_string(), v);
    }
    EvalReport::finish(format!("mrr_at_{k}"), per, missing, excluded)
}

pub fn recall_at_k(run: &[RankedList], qrels: &Qrels, k: usize) -> EvalReport {
    let by_q = index_run(run);
    let (judged, excluded) = judged_queries(qrels);
    let mut per = BTreeMap::new();
    let mut missing = 0;
    for q in judged {
        let relevant = qrels.positives(q).count();
        let hit = match by_q.get(q) {
            None => {
                missing += 1;
                0
            }
            Some(list) => list.doc_ids().take(k).filter(|d| qrels.grade(q, d).unwrap_or(0) >= 1).count(),
        };
        per.insert(q.to_string(), hit as f64 / relevant as f64);
    }
    EvalReport::finish(format!("recall_at_{k}"), per, missing, excluded)
}

/// DCG over the top `k` of `grades` (in rank order).
pub fn dcg(grades: &[u32], k: usize, gain: Gain) -> f64 {
    grades.iter().take(k).enumerate().map(|(r, &g)| gain.apply(g) / ((r + 2) as f64).log2()).sum()
}

pub fn ndcg_at_k(run: &[RankedList], qrels: &Qrels, k: usize, gain: Gain) -> EvalReport {
    let by_q = index_run(run);
    let (judged, excluded) = judged_queries(qrels);
    let mut per = BTreeMap::new();
    let mut missing = 0;
    for q in judged {
        let mut ideal: Vec<u32> = qrels.for_query(q).map(|m| m.values().copied().collect()).unwrap_or_default();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(&ideal, k, gain);
        let v = match by_q.get(q) {
            None => {
                missing += 1;
                0.0
            }
            Some(_) if idcg == 0.0 => 0.0,
            Some(list) => {
                let grades: Vec<u32> = list.doc_ids().take(k).map(|d| qrels.grade(q, d).unwrap_or(0)).collect();
                dcg(&grades, k, gain) / idcg
            }
        };
        per.insert(q.to_string(), v);
    }
    EvalReport::finish(format!("ndcg_at_{k}"), per, missing, excluded)
}

/// Fraction of `(predicted, expected)` pairs that agree.
pub fn accuracy<T: PartialEq>(pairs: &[(T, T)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    Ok(pairs.iter().filter(|(p, e)| p == e).count() as f64 / pairs.len() as f64)
}
