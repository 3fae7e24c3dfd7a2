//! BatchTopK sparse autoencoder over dense embeddings.

mod checkpoint;
mod config;
mod params;
mod topk;
mod train;

pub use checkpoint::{SaeModel, SAE_MAGIC};
pub use config::{SaeConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, DEFAULT_DEAD_WINDOW, DEFAULT_LAMBDA};
pub use params::{decode, encode_infer, encode_pre, encode_pre_with, encode_store, init_params, SaeParams, SparseCode};
pub use topk::{batch_topk_mask, batch_topk_select, BatchSelection};
pub use train::{
    aux_term, calibrate_on, calibrate_theta, evaluate_loss, fit, loss_and_grads, loss_log_csv, nmse, select_aux,
    select_for_step, train_step, write_loss_log, AdamState, AuxTerm, FitOutput, Grads, LossRecord, Losses,
    StepSelection, TrainState,
};
