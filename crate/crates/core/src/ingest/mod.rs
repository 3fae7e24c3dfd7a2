//! Corpora, queries, embeddings and relevance judgments on disk, plus a
//! synthetic generator with known topic structure.

mod corpus;
mod embeddings;
mod qrels;
mod synth;

pub use corpus::{read_corpus, write_corpus_tsv, Corpus, CorpusFormat, Passage, QuerySet};
pub use embeddings::{read_embeddings, write_embeddings, EmbeddingStore, DEMB_HEADER_LEN, DEMB_MAGIC};
pub use qrels::{read_qrels, write_qrels, Qrels};
pub use synth::{pseudo_word, synth_generate, SynthData, SynthSpec, TopicTable, SYNONYMS_PER_TOPIC};
