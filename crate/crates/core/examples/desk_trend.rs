//! Sweeps SAE k on the synthetic corpus and prints reconstruction error,
//! concept-retrieval MRR@10, and BM25 vs concept MRR@10 on the lexical
//! mismatch set.
//!
//! cargo run --release -p latentir-core --example desk_trend -- [m] [epochs] [lr]

use latentir_core::clsr::{ConceptIndex, ScoringParams};
use latentir_core::ingest::{synth_generate, SynthSpec};
use latentir_core::lexical::{mismatch_set, Bm25Params, TermIndex};
use latentir_core::metrics::mrr_at_k;
use latentir_core::recon_eval::{dense_search, reconstruct_store};
use latentir_core::run::RankedList;
use latentir_core::sae::{encode_store, fit, nmse, SaeConfig};
use latentir_core::Exec;

fn main() -> latentir_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map_or(128, |s| s.parse().unwrap());
    let epochs: usize = args.get(2).map_or(120, |s| s.parse().unwrap());
    let lr: f64 = args.get(3).map_or(2e-3, |s| s.parse().unwrap());
    let exec = Exec::default();
    let presets = [("k64", ScoringParams::K64), ("k48", ScoringParams::K48), ("eff", ScoringParams::EFFICIENT), ("b0", ScoringParams { k1: 0.6, b: 0.0, k2: 2.5 })];
    for seed in [1u64, 2, 3] {
        let data = synth_generate(&SynthSpec { seed, ..SynthSpec::default() })?;
        let dense = dense_search(exec, &data.doc_embeddings, &data.query_embeddings, 10)?;
        let terms = TermIndex::build(exec, &data.corpus);
        let bm25: Vec<RankedList> = terms.search_all(exec, &data.queries, 1000, Bm25Params::default());
        let mm = mismatch_set(&bm25, &data.qrels, 10);
        let sub = data.qrels.restrict(&mm.queries);
        println!(
            "seed {seed}: dense mrr {:.3}  bm25 mrr {:.3}  mismatch {} (bm25 on it {:.3})",
            mrr_at_k(&dense, &data.qrels, 10).mean,
            mrr_at_k(&bm25, &data.qrels, 10).mean,
            mm.queries.len(),
            mrr_at_k(&bm25, &sub, 10).mean
        );
        for k in [4usize, 8, 16] {
            let cfg = SaeConfig { epochs, lr, ..SaeConfig::desk(16, m, k) }.with_seed(seed);
            let t = std::time::Instant::now();
            let out = fit(exec, &data.doc_embeddings, &cfg)?;
            let recon = reconstruct_store(exec, &out.params, out.theta, &data.doc_embeddings)?;
            let e = nmse(&data.doc_embeddings.to_f64(), &recon.to_f64(), 16)?;
            let dcodes = encode_store(exec, &out.params, out.theta, &data.doc_embeddings)?;
            let qcodes = encode_store(exec, &out.params, out.theta, &data.query_embeddings)?;
            let l0 = dcodes.iter().map(|c| c.len()).sum::<usize>() as f64 / dcodes.len() as f64;
            let index = ConceptIndex::build(exec, &dcodes, m, 24)?;
            let mut line = format!("  k={k:2} nmse {e:.4} l0 {l0:.1} {:.1}s", t.elapsed().as_secs_f64());
            for (name, p) in presets {
                let run: Vec<RankedList> = index.search_all(exec, &qcodes, &p, 1000)?.into_iter().map(|r| r.list).collect();
                line += &format!(" | {name} {:.3}/{:.3}", mrr_at_k(&run, &data.qrels, 10).mean, mrr_at_k(&run, &sub, 10).mean);
            }
            println!("{line}");
        }
    }
    Ok(())
}
