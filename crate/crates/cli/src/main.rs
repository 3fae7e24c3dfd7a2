//! `latentir`: the concept-retrieval pipeline, one artifact-producing step
//! per subcommand, all reading and writing one working directory.

mod commands;
mod config;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit code 2 for bad usage, config or missing inputs; 1 for failures while
/// running.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }
}

impl From<latentir_core::Error> for CliError {
    fn from(e: latentir_core::Error) -> Self {
        use latentir_core::Error as E;
        let code = match e {
            E::Invalid(_) | E::DimMismatch { .. } | E::Parse { .. } | E::Format { .. } | E::Unknown { .. } => 2,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "latentir", version, about = "Concept-level sparse retrieval over sparse autoencoder latents")]
pub struct Cli {
    /// Working directory holding every artifact.
    #[arg(long, short = 'w', global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// TOML run config; defaults to <workdir>/latentir.toml when present.
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set sae.k=8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print the command summary as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the resolved config and its digest.
    Config,
    /// Generate a synthetic corpus, queries, qrels and embeddings.
    Synth,
    /// Train the sparse autoencoder on document embeddings.
    SaeTrain,
    /// Reconstruction error and retrieval with reconstructed embeddings.
    SaeEval,
    /// Per-latent document frequency, idf and top passages.
    ConceptStats,
    /// Describe every live latent.
    Describe {
        /// Token-statistics descriptions, no language model.
        #[arg(long)]
        offline: bool,
    },
    /// Intrusion test on SAE latents and on raw embedding dimensions.
    Intrude,
    /// Build the concept inverted index.
    IndexBuild,
    /// Run every query against the concept index.
    Search {
        /// Also print the top results of this query.
        #[arg(long)]
        query: Option<String>,
    },
    /// Build the BM25 term index.
    Bm25Index,
    /// Run every query against the BM25 index.
    Bm25Search,
    /// Effectiveness and cost table for dense, BM25 and concept retrieval.
    Eval,
    /// Effectiveness on queries where BM25 misses every relevant doc.
    Mismatch,
    /// Export the embedding-identification and ranking-pair tasks.
    TasksExport,
    /// Serve the JSON API (and optional static UI) over this workdir.
    Serve,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
