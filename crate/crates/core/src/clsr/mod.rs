//! Concept-level sparse retrieval: BM25-style scoring where the vocabulary
//! is the set of SAE latents and term frequency is latent activation.

mod index;
mod scoring;

pub use index::{cap_code, flops_estimate, ConceptIndex, Contribution, PostingList, CLSR_HEADER_LEN, CLSR_MAGIC};
pub use scoring::{concept_idf, contribution, f_d, f_q, ScoringParams};
