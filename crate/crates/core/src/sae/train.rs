//! Training: masked reconstruction loss, dead-latent auxiliary loss, AdamW.
//!
//! The BatchTopK mask is treated as a constant within a step, so gradients
//! flow only through surviving pre-activations. The auxiliary term is
//! differentiated through the residual as well (no stop-gradient), which
//! keeps the analytic gradient equal to the derivative of the reported total
//! loss.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{SaeConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use super::params::{dot, encode_pre_with, init_params, SaeParams};
use super::topk::{batch_topk_select, BatchSelection};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::EmbeddingStore;

/// Rows per gradient work unit. Fixed so reductions are order-stable.
const GRAD_CHUNK_ROWS: usize = 16;

/// Same layout as [`SaeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
    pub b_dec: Vec<f64>,
}

impl Grads {
    pub fn zeros(d: usize, m: usize) -> Self {
        Grads { w_enc: vec![0.0; m * d], b_enc: vec![0.0; m], w_dec: vec![0.0; m * d], b_dec: vec![0.0; d] }
    }

    fn add(&mut self, other: &Grads) {
        for (a, b) in [
            (&mut self.w_enc, &other.w_enc),
            (&mut self.b_enc, &other.b_enc),
            (&mut self.w_dec, &other.w_dec),
            (&mut self.b_dec, &other.b_dec),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub recon: f64,
    pub aux: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub recon: f64,
    pub aux: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments { m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn apply(&mut self, param: &mut [f64], grad: &[f64], lr: f64, bc1: f64, bc2: f64) {
        for ((p, g), (m, v)) in param.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            // decoupled weight decay is 0
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// AdamW state for all four parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    w_enc: Moments,
    b_enc: Moments,
    w_dec: Moments,
    b_dec: Moments,
}

impl AdamState {
    pub fn new(d: usize, m: usize) -> Self {
        AdamState { w_enc: Moments::new(m * d), b_enc: Moments::new(m), w_dec: Moments::new(m * d), b_dec: Moments::new(d) }
    }

    /// One bias-corrected AdamW update; `t` is the 1-based step count.
    pub fn update(&mut self, params: &mut SaeParams, grads: &Grads, lr: f64, t: u64) {
        let bc1 = 1.0 - ADAM_BETA1.powf(t as f64);
        let bc2 = 1.0 - ADAM_BETA2.powf(t as f64);
        self.w_enc.apply(&mut params.w_enc, &grads.w_enc, lr, bc1, bc2);
        self.b_enc.apply(&mut params.b_enc, &grads.b_enc, lr, bc1, bc2);
        self.w_dec.apply(&mut params.w_dec, &grads.w_dec, lr, bc1, bc2);
        self.b_dec.apply(&mut params.b_dec, &grads.b_dec, lr, bc1, bc2);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub steps_since_fire: Vec<u64>,
    /// Running mean of per-batch smallest survivors.
    pub theta: f64,
    pub theta_batches: u64,
    pub adam: AdamState,
    pub loss_log: Vec<LossRecord>,
}

impl TrainState {
    pub fn new(d: usize, m: usize) -> Self {
        TrainState {
            step: 0,
            steps_since_fire: vec![0; m],
            theta: 0.0,
            theta_batches: 0,
            adam: AdamState::new(d, m),
            loss_log: Vec::new(),
        }
    }

    /// Latents that have not fired for at least `window` steps.
    pub fn dead_mask(&self, window: u64) -> Vec<bool> {
        self.steps_since_fire.iter().map(|&s| s >= window).collect()
    }

    pub fn observe_batch_min(&mut self, min_survivor: f64) {
        self.theta_batches += 1;
        self.theta += (min_survivor - self.theta) / self.theta_batches as f64;
    }
}

/// Mean of the per-batch smallest survivors.
pub fn calibrate_theta(batch_minima: &[Option<f64>]) -> Result<f64> {
    let seen: Vec<f64> = batch_minima.iter().flatten().copied().collect();
    if seen.is_empty() {
        return Err(Error::invalid("calibrate_theta: no batch with surviving activations observed"));
    }
    Ok(seen.iter().sum::<f64>() / seen.len() as f64)
}

/// Top `width` dead latents of one row by pre-activation (positive only),
/// sorted by latent id.
pub fn select_aux(pre_row: &[f64], dead: &[bool], width: usize) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> =
        pre_row.iter().enumerate().filter(|&(j, &p)| dead[j] && p > 0.0).map(|(j, &p)| (j, p)).collect();
    cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    cand.truncate(width);
    cand.sort_unstable_by_key(|c| c.0);
    cand
}

/// Frozen selections for one step: main BatchTopK survivors and per-row
/// auxiliary latents.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSelection {
    pub main: BatchSelection,
    pub aux: Vec<Vec<(usize, f64)>>,
}

pub fn select_for_step(pre: &[f64], n: usize, m: usize, k: usize, dead: &[bool], aux_width: usize) -> Result<StepSelection> {
    let main = batch_topk_select(pre, n, m, k)?;
    let aux = if dead.iter().any(|&x| x) {
        pre.chunks_exact(m).map(|row| select_aux(row, dead, aux_width)).collect()
    } else {
        vec![Vec::new(); n]
    };
    Ok(StepSelection { main, aux })
}

fn axpy_row(out: &mut [f64], a: f64, row: &[f64]) {
    out.iter_mut().zip(row).for_each(|(o, r)| *o += a * r);
}

/// Loss and gradient for a batch under frozen selections. Activations are
/// re-read from `pre`, so this is exactly differentiable in the parameters.
pub fn loss_and_grads(
    exec: Exec,
    params: &SaeParams,
    batch: &[f64],
    pre: &[f64],
    sel: &StepSelection,
    lambda: f64,
) -> (Losses, Grads) {
    let (d, m) = (params.d, params.m);
    let n = batch.len() / d;
    let inv_n = 1.0 / n as f64;
    let parts = exec.map_chunks(batch, d, GRAD_CHUNK_ROWS, |start, chunk| {
        let mut g = Grads::zeros(d, m);
        let (mut recon, mut aux) = (0.0, 0.0);
        let mut h_hat = vec![0.0; d];
        let mut e_aux = vec![0.0; d];
        for (r, h) in chunk.chunks_exact(d).enumerate() {
            let i = start + r;
            let pre_row = &pre[i * m..(i + 1) * m];
            let main = &sel.main.rows[i];
            let aux_sel = &sel.aux[i];

            h_hat.copy_from_slice(&params.b_dec);
            for &(j, _) in main {
                axpy_row(&mut h_hat, pre_row[j], params.dec_row(j));
            }
            let exact = h.iter().zip(&h_hat).all(|(a, b)| a == b);
            // a row reconstructed exactly has nothing left for the aux latents
            let aux_sel: &[(usize, f64)] = if exact { &[] } else { aux_sel };
            e_aux.iter_mut().for_each(|x| *x = 0.0);
            for &(j, _) in aux_sel {
                axpy_row(&mut e_aux, pre_row[j], params.dec_row(j));
            }
            // e = h − ĥ, r = e − ê
            let mut g_hat = vec![0.0; d];
            let mut g_aux = vec![0.0; d];
            for c in 0..d {
                let e = h[c] - h_hat[c];
                let res = e - e_aux[c];
                recon += e * e;
                aux += res * res;
                g_hat[c] = (-2.0 * e - 2.0 * lambda * res) * inv_n;
                g_aux[c] = -2.0 * lambda * res * inv_n;
            }
            axpy_row(&mut g.b_dec, 1.0, &g_hat);
            for &(j, _) in main {
                let z = pre_row[j];
                axpy_row(&mut g.w_dec[j * d..(j + 1) * d], z, &g_hat);
                let dz = dot(params.dec_row(j), &g_hat);
                axpy_row(&mut g.w_enc[j * d..(j + 1) * d], dz, h);
                g.b_enc[j] += dz;
            }
            for &(j, _) in aux_sel {
                let a = pre_row[j];
                axpy_row(&mut g.w_dec[j * d..(j + 1) * d], a, &g_aux);
                let da = dot(params.dec_row(j), &g_aux);
                axpy_row(&mut g.w_enc[j * d..(j + 1) * d], da, h);
                g.b_enc[j] += da;
            }
        }
        (recon, aux, g)
    });
    let mut grads = Grads::zeros(d, m);
    let (mut recon, mut aux) = (0.0, 0.0);
    for (r, a, g) in &parts {
        recon += r;
        aux += a;
        grads.add(g);
    }
    let recon = recon * inv_n;
    let aux = aux * inv_n;
    (Losses { recon, aux, total: recon + lambda * aux }, grads)
}

/// Auxiliary dead-latent reconstruction of a residual.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxTerm {
    /// Mean over rows of `‖residual − ê‖²` (unweighted by λ).
    pub loss: f64,
    pub selection: Vec<Vec<(usize, f64)>>,
    /// ∂loss/∂W_dec, `m × d`.
    pub grad_w_dec: Vec<f64>,
    /// ∂loss/∂pre-activations, `n × m`.
    pub grad_pre: Vec<f64>,
    /// ∂loss/∂residual, `n × d`.
    pub grad_residual: Vec<f64>,
}

/// Reconstructs `residual` (`n × d`) from the `aux_width` dead latents with
/// the largest pre-activations in each row. Zero when nothing is dead; rows
/// with an exactly zero residual contribute nothing.
pub fn aux_term(params: &SaeParams, pre: &[f64], residual: &[f64], dead: &[bool], aux_width: usize) -> Result<AuxTerm> {
    let (d, m) = (params.d, params.m);
    if !residual.len().is_multiple_of(d) || pre.len() != (residual.len() / d) * m || dead.len() != m {
        return Err(Error::invalid("aux_term: inconsistent shapes"));
    }
    let n = residual.len() / d;
    let mut out = AuxTerm {
        loss: 0.0,
        selection: vec![Vec::new(); n],
        grad_w_dec: vec![0.0; m * d],
        grad_pre: vec![0.0; n * m],
        grad_residual: vec![0.0; n * d],
    };
    if n == 0 {
        return Ok(out);
    }
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let pre_row = &pre[i * m..(i + 1) * m];
        let resid_row = &residual[i * d..(i + 1) * d];
        if resid_row.iter().all(|&x| x == 0.0) {
            continue;
        }
        let sel = select_aux(pre_row, dead, aux_width);
        let mut recon = vec![0.0; d];
        for &(j, a) in &sel {
            axpy_row(&mut recon, a, params.dec_row(j));
        }
        let mut g = vec![0.0; d];
        for c in 0..d {
            let r = residual[i * d + c] - recon[c];
            out.loss += r * r * inv_n;
            g[c] = -2.0 * r * inv_n;
            out.grad_residual[i * d + c] = 2.0 * r * inv_n;
        }
        for &(j, a) in &sel {
            axpy_row(&mut out.grad_w_dec[j * d..(j + 1) * d], a, &g);
            out.grad_pre[i * m + j] = dot(params.dec_row(j), &g);
        }
        out.selection[i] = sel;
    }
    Ok(out)
}

/// Loss of `batch` under the current parameters with freshly computed masks.
pub fn evaluate_loss(params: &SaeParams, batch: &[f64], config: &SaeConfig, state: &TrainState) -> Result<Losses> {
    let n = batch.len() / params.d;
    let pre = encode_pre_with(Exec::Sequential, params, batch)?;
    let sel = select_for_step(&pre, n, params.m, config.k, &state.dead_mask(config.dead_window), config.aux_width)?;
    Ok(loss_and_grads(Exec::Sequential, params, batch, &pre, &sel, config.lambda).0)
}

/// One optimization step on a flat `n × d` batch; updates `params` and
/// `state` in place.
pub fn train_step(exec: Exec, params: &mut SaeParams, state: &mut TrainState, batch: &[f64], config: &SaeConfig) -> Result<Losses> {
    let (d, m) = (params.d, params.m);
    if batch.is_empty() || !batch.len().is_multiple_of(d) {
        return Err(Error::DimMismatch { expected: d, actual: batch.len() % d.max(1) });
    }
    let n = batch.len() / d;
    let pre = encode_pre_with(exec, params, batch)?;
    let dead = state.dead_mask(config.dead_window);
    let sel = select_for_step(&pre, n, m, config.k, &dead, config.aux_width)?;
    let (losses, grads) = loss_and_grads(exec, params, batch, &pre, &sel, config.lambda);
    if !losses.total.is_finite() {
        return Err(Error::NonFiniteLoss { step: state.step, recon: losses.recon, aux: losses.aux });
    }

    state.step += 1;
    state.adam.update(params, &grads, config.lr, state.step);
    params.normalize_decoder();

    let mut fired = vec![false; m];
    for row in &sel.main.rows {
        for &(j, _) in row {
            fired[j] = true;
        }
    }
    for (s, f) in state.steps_since_fire.iter_mut().zip(fired) {
        *s = if f { 0 } else { s.saturating_add(1) };
    }
    if let Some(min) = sel.main.min_survivor {
        state.observe_batch_min(min);
    }
    state.loss_log.push(LossRecord { step: state.step, recon: losses.recon, aux: losses.aux });
    Ok(losses)
}

fn gather(data: &[f64], d: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(&data[r * d..(r + 1) * d]);
    }
    out
}

/// Mean of per-batch smallest survivors with fixed parameters, batching
/// `data` in row order.
pub fn calibrate_on(exec: Exec, params: &SaeParams, data: &[f64], batch_size: usize, k: usize) -> Result<f64> {
    let d = params.d;
    let mut minima = Vec::new();
    for chunk in data.chunks(batch_size.max(1) * d) {
        let n = chunk.len() / d;
        let pre = encode_pre_with(exec, params, chunk)?;
        minima.push(batch_topk_select(&pre, n, params.m, k)?.min_survivor);
    }
    calibrate_theta(&minima)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub params: SaeParams,
    pub state: TrainState,
    /// Inference threshold from a final calibration pass.
    pub theta: f64,
}

/// Trains from scratch: `epochs` passes over seeded shuffles of the rows.
pub fn fit(exec: Exec, embeddings: &EmbeddingStore, config: &SaeConfig) -> Result<FitOutput> {
    config.validate()?;
    if embeddings.dim() != config.d {
        return Err(Error::DimMismatch { expected: config.d, actual: embeddings.dim() });
    }
    if embeddings.is_empty() {
        return Err(Error::invalid("fit: no training rows"));
    }
    let d = config.d;
    let data = embeddings.to_f64();
    let mut params = init_params(config, Some(&data))?;
    let mut state = TrainState::new(d, config.m);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..embeddings.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(config.batch_size) {
            let batch = gather(&data, d, rows);
            train_step(exec, &mut params, &mut state, &batch, config)?;
        }
    }
    let theta = calibrate_on(exec, &params, &data, config.batch_size, config.k)?;
    state.theta = theta;
    Ok(FitOutput { params, state, theta })
}

/// `mean‖h − ĥ‖² / mean‖h − mean(H)‖²` over flat `n × d` matrices.
pub fn nmse(h: &[f64], h_hat: &[f64], d: usize) -> Result<f64> {
    if h.len() != h_hat.len() {
        return Err(Error::DimMismatch { expected: h.len(), actual: h_hat.len() });
    }
    if d == 0 || h.is_empty() || !h.len().is_multiple_of(d) {
        return Err(Error::invalid("nmse: empty or ragged input"));
    }
    let n = (h.len() / d) as f64;
    let mut mean = vec![0.0; d];
    for row in h.chunks_exact(d) {
        axpy_row(&mut mean, 1.0, row);
    }
    mean.iter_mut().for_each(|x| *x /= n);
    let err: f64 = h.iter().zip(h_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let base: f64 = h.chunks_exact(d).flat_map(|row| row.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b))).sum();
    if base == 0.0 {
        return Err(Error::invalid("nmse: input has zero variance"));
    }
    Ok(err / base)
}

pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut out = String::from("step,recon,aux\n");
    for r in log {
        writeln!(out, "{},{},{}", r.step, r.recon, r.aux).unwrap();
    }
    out
}

pub fn write_loss_log(log: &[LossRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, loss_log_csv(log)).map_err(|e| Error::io(path, e))
}
