use latentir_core::ingest::{synth_generate, SynthSpec};
use latentir_core::recon_eval::reconstruct_store;
use latentir_core::sae::{fit, loss_log_csv, nmse, SaeConfig};
use latentir_core::Exec;

fn fitted_nmse(seed: u64, k: usize) -> f64 {
    let data = synth_generate(&SynthSpec { seed, ..SynthSpec::default() }).unwrap();
    let out = fit(Exec::default(), &data.doc_embeddings, &SaeConfig::desk(16, 64, k).with_seed(seed)).unwrap();
    assert!(out.params.max_atom_norm_error() < 1e-6);
    let recon = reconstruct_store(Exec::default(), &out.params, out.theta, &data.doc_embeddings).unwrap();
    nmse(&data.doc_embeddings.to_f64(), &recon.to_f64(), 16).unwrap()
}

#[test]
fn sparsity_trades_against_reconstruction() {
    let mut k4: Vec<f64> = (1..=3).map(|s| fitted_nmse(s, 4)).collect();
    let mut k8: Vec<f64> = (1..=3).map(|s| fitted_nmse(s, 8)).collect();
    assert!(k4.iter().all(|&e| e < 0.1), "{k4:?}");
    k4.sort_by(f64::total_cmp);
    k8.sort_by(f64::total_cmp);
    assert!(k8[1] <= k4[1], "median k=8 {} vs k=4 {}", k8[1], k4[1]);
}

#[test]
fn fit_is_a_function_of_data_and_config() {
    let data = synth_generate(&SynthSpec { docs: 400, queries: 20, ..SynthSpec::default() }).unwrap();
    let cfg = SaeConfig { epochs: 3, ..SaeConfig::desk(16, 64, 4) }.with_seed(5);
    let a = fit(Exec::default(), &data.doc_embeddings, &cfg).unwrap();
    let b = fit(Exec::Sequential, &data.doc_embeddings, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.theta.to_bits(), b.theta.to_bits());
    assert_eq!(loss_log_csv(&a.state.loss_log), loss_log_csv(&b.state.loss_log));
    let c = fit(Exec::default(), &data.doc_embeddings, &cfg.with_seed(6)).unwrap();
    assert_ne!(a.params, c.params);
}
