//! Concept-level retrieval over sparse-autoencoder latents of dense
//! passage embeddings.
//!
//! The pipeline: train a BatchTopK SAE on document embeddings ([`sae`]),
//! encode documents and queries into sparse codes, index the codes
//! ([`clsr`]) and rank with a saturating BM25-style score. [`recon_eval`]
//! measures what the SAE bottleneck costs a dense retriever, [`lexical`]
//! provides the BM25 baseline, and [`concepts`] turns latents into
//! something a person can read and test.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binio;
pub mod clsr;
pub mod concepts;
pub mod digest;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod lexical;
pub mod metrics;
pub mod recon_eval;
pub mod report;
pub mod run;
pub mod sae;
pub mod workdir;

pub use digest::Digest;
pub use error::{Error, Result};
pub use exec::Exec;
