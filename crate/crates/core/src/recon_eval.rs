//! How well reconstructed embeddings preserve dense retrieval behavior.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{EmbeddingStore, Qrels};
use crate::metrics::{mrr_at_k, ndcg_at_k, recall_at_k, Gain};
pub use crate::run::RankedList;
use crate::sae::{decode, encode_store, nmse, SaeParams};

pub const REPORT_COLUMNS: [&str; 6] = ["nmse", "mrr_at_10", "recall_at_1000", "ndcg_at_10", "spearman_mean", "spearman_var"];

fn dot32(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Exact top-`top_n` by dot product for every query, in query order.
pub fn dense_search(exec: Exec, docs: &EmbeddingStore, queries: &EmbeddingStore, top_n: usize) -> Result<Vec<RankedList>> {
    if docs.dim() != queries.dim() {
        return Err(Error::DimMismatch { expected: docs.dim(), actual: queries.dim() });
    }
    Ok(exec.map_range(queries.len(), |qi| {
        let q = queries.row(qi);
        let scored = (0..docs.len()).map(|di| (di as u32, dot32(q, docs.row(di)))).collect();
        RankedList::from_positions(queries.id(qi), scored, |d| docs.id(d as usize), top_n)
    }))
}

/// Replaces each row by `decode(encode_infer(row))`.
pub fn reconstruct_store(exec: Exec, params: &SaeParams, theta: f64, store: &EmbeddingStore) -> Result<EmbeddingStore> {
    let codes = encode_store(exec, params, theta, store)?;
    let rows: Vec<Vec<f32>> = exec
        .map_slice(&codes, |c| decode(params, c).map(|v| v.into_iter().map(|x| x as f32).collect()))
        .into_iter()
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return EmbeddingStore::empty(store.dim());
    }
    EmbeddingStore::from_rows(store.ids().to_vec(), &rows)
}

/// Average ranks (1-based) with ties sharing the mean of their positions;
/// larger values get smaller ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho of two score vectors over the same items. Constant
/// vectors correlate 1 with each other and 0 with anything else.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch { expected: a.len(), actual: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman needs at least 2 items"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    Ok(match (va == 0.0, vb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => cov / (va * vb).sqrt(),
    })
}

/// Rescores the docs of `original` with `recon_scorer` and correlates the
/// two orderings.
pub fn spearman_fidelity(original: &RankedList, recon_scorer: impl Fn(&str) -> f64) -> Result<f64> {
    if original.len() < 2 {
        return Err(Error::invalid(format!("spearman fidelity for `{}` needs N ≥ 2", original.query_id)));
    }
    let orig: Vec<f64> = original.entries.iter().map(|(_, s)| *s).collect();
    let recon: Vec<f64> = original.entries.iter().map(|(d, _)| recon_scorer(d)).collect();
    spearman(&orig, &recon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetrievalMetrics {
    pub mrr_at_10: f64,
    pub recall_at_1000: f64,
    pub ndcg_at_10: f64,
}

impl RetrievalMetrics {
    pub fn compute(run: &[RankedList], qrels: &Qrels, corpus_size: usize) -> Self {
        RetrievalMetrics {
            mrr_at_10: mrr_at_k(run, qrels, 10).mean,
            recall_at_1000: recall_at_k(run, qrels, 1000.min(corpus_size)).mean,
            ndcg_at_10: ndcg_at_k(run, qrels, 10, Gain::Linear).mean,
        }
    }
}

fn ratio(recon: f64, base: f64) -> f64 {
    if base == 0.0 {
        if recon == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        recon / base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconReport {
    pub nmse: f64,
    pub original: RetrievalMetrics,
    pub reconstructed: RetrievalMetrics,
    pub ratio: RetrievalMetrics,
    pub spearman_mean: f64,
    pub spearman_var: f64,
    pub depth: usize,
    pub queries: usize,
}

impl ReconReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("row,{}\n", REPORT_COLUMNS.join(","));
        let m = |r: &RetrievalMetrics| format!("{},{},{}", r.mrr_at_10, r.recall_at_1000, r.ndcg_at_10);
        writeln!(out, "original,,{},,", m(&self.original)).unwrap();
        writeln!(out, "reconstructed,{},{},{},{}", self.nmse, m(&self.reconstructed), self.spearman_mean, self.spearman_var)
            .unwrap();
        writeln!(out, "ratio,,{},,", m(&self.ratio)).unwrap();
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14}", "row");
        for c in REPORT_COLUMNS {
            write!(out, "{c:>16}").unwrap();
        }
        out.push('\n');
        let blank = format!("{:>16}", "-");
        let row = |name: &str, nm: Option<f64>, r: &RetrievalMetrics, sp: Option<(f64, f64)>| {
            let mut s = format!("{name:<14}");
            s += &nm.map_or(blank.clone(), |v| format!("{v:>16.6}"));
            s += &format!("{:>16.6}{:>16.6}{:>16.6}", r.mrr_at_10, r.recall_at_1000, r.ndcg_at_10);
            match sp {
                Some((a, b)) => s += &format!("{a:>16.6}{b:>16.6}"),
                None => s += &format!("{blank}{blank}"),
            }
            s.push('\n');
            s
        };
        out += &row("original", None, &self.original, None);
        out += &row("reconstructed", Some(self.nmse), &self.reconstructed, Some((self.spearman_mean, self.spearman_var)));
        out += &row("ratio", None, &self.ratio, None);
        out
    }
}

/// Compares retrieval on original vs reconstructed stores. Depth is
/// `min(1000, |D|)`; the Spearman universe is each query's original top-N.
pub fn recon_report_from_stores(
    exec: Exec,
    docs: &EmbeddingStore,
    queries: &EmbeddingStore,
    recon_docs: &EmbeddingStore,
    recon_queries: &EmbeddingStore,
    qrels: &Qrels,
) -> Result<ReconReport> {
    if queries.is_empty() {
        return Err(Error::invalid("recon report: empty query set"));
    }
    if recon_docs.ids() != docs.ids() || recon_queries.ids() != queries.ids() {
        return Err(Error::invalid("recon report: reconstructed stores do not match originals"));
    }
    let depth = 1000.min(docs.len());
    let orig_run = dense_search(exec, docs, queries, depth)?;
    let recon_run = dense_search(exec, recon_docs, recon_queries, depth)?;
    let original = RetrievalMetrics::compute(&orig_run, qrels, docs.len());
    let reconstructed = RetrievalMetrics::compute(&recon_run, qrels, docs.len());

    let pos = recon_docs.position_map();
    let rhos: Vec<f64> = exec
        .map_range(orig_run.len(), |qi| {
            let q = recon_queries.row(qi);
            spearman_fidelity(&orig_run[qi], |d| dot32(q, recon_docs.row(pos[d])))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let n = rhos.len() as f64;
    let spearman_mean = rhos.iter().sum::<f64>() / n;
    let spearman_var = rhos.iter().map(|r| (r - spearman_mean).powi(2)).sum::<f64>() / n;

    let nmse = nmse(&docs.to_f64(), &recon_docs.to_f64(), docs.dim())?;
    Ok(ReconReport {
        nmse,
        ratio: RetrievalMetrics {
            mrr_at_10: ratio(reconstructed.mrr_at_10, original.mrr_at_10),
            recall_at_1000: ratio(reconstructed.recall_at_1000, original.recall_at_1000),
            ndcg_at_10: ratio(reconstructed.ndcg_at_10, original.ndcg_at_10),
        },
        original,
        reconstructed,
        spearman_mean,
        spearman_var,
        depth,
        queries: queries.len(),
    })
}

pub fn recon_report(
    exec: Exec,
    docs: &EmbeddingStore,
    queries: &EmbeddingStore,
    params: &SaeParams,
    theta: f64,
    qrels: &Qrels,
) -> Result<ReconReport> {
    let rd = reconstruct_store(exec, params, theta, docs)?;
    let rq = reconstruct_store(exec, params, theta, queries)?;
    recon_report_from_stores(exec, docs, queries, &rd, &rq, qrels)
}
