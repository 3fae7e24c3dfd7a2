//! File names of the artifacts a pipeline run leaves in its working directory.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workdir {
    root: PathBuf,
}

macro_rules! artifact {
    ($($name:ident => $file:literal),* $(,)?) => {
        impl Workdir {
            $(pub fn $name(&self) -> PathBuf { self.root.join($file) })*
        }
    };
}

artifact! {
    corpus => "corpus.tsv",
    queries => "queries.tsv",
    qrels => "qrels.txt",
    doc_embeddings => "docs.demb",
    query_embeddings => "queries.demb",
    topics => "topics.json",
    sae => "sae.bin",
    loss_log => "sae_loss.csv",
    sae_eval => "sae_eval.csv",
    concept_stats => "concept_stats.json",
    descriptions => "descriptions.jsonl",
    intrusion => "intrusion.json",
    index => "index.clsr",
    clsr_run => "clsr.run",
    bm25_index => "bm25.json",
    bm25_run => "bm25.run",
    eval => "eval.csv",
    mismatch => "mismatch.json",
    tasks => "tasks.json",
    task_availability => "task_availability.json",
    annotations => "annotations.jsonl",
    manifest => "manifest.json",
    lock => ".lock",
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}
