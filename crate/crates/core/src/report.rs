//! One-row-per-system effectiveness and efficiency table.

use std::fmt::Write as _;

use serde::Serialize;

use crate::ingest::Qrels;
use crate::recon_eval::RetrievalMetrics;
use crate::run::RankedList;

pub const EVAL_COLUMNS: [&str; 6] = ["system", "mrr_at_10", "recall_at_1000", "ndcg_at_10", "flops", "storage_bytes"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub system: String,
    pub mrr_at_10: f64,
    pub recall_at_1000: f64,
    pub ndcg_at_10: f64,
    pub flops: Option<f64>,
    pub storage_bytes: Option<usize>,
}

impl EvalRow {
    pub fn new(system: impl Into<String>, run: &[RankedList], qrels: &Qrels, corpus_size: usize) -> Self {
        let m = RetrievalMetrics::compute(run, qrels, corpus_size);
        EvalRow {
            system: system.into(),
            mrr_at_10: m.mrr_at_10,
            recall_at_1000: m.recall_at_1000,
            ndcg_at_10: m.ndcg_at_10,
            flops: None,
            storage_bytes: None,
        }
    }

    pub fn with_cost(mut self, flops: f64, storage_bytes: usize) -> Self {
        self.flops = Some(flops);
        self.storage_bytes = Some(storage_bytes);
        self
    }
}

/// Empty cells for systems without an index cost.
pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = EVAL_COLUMNS.join(",") + "\n";
    for r in rows {
        let flops = r.flops.map_or(String::new(), |f| f.to_string());
        let bytes = r.storage_bytes.map_or(String::new(), |b| b.to_string());
        writeln!(out, "{},{},{},{},{flops},{bytes}", r.system, r.mrr_at_10, r.recall_at_1000, r.ndcg_at_10).unwrap();
    }
    out
}
