use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::SaeConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::EmbeddingStore;

/// Autoencoder weights. Both matrices are stored `m × d` row-major: row `j`
/// of `w_enc` is the encoder direction of latent `j`, row `j` of `w_dec` is
/// its dictionary atom.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    pub d: usize,
    pub m: usize,
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
    pub b_dec: Vec<f64>,
}

/// Sparse latent decomposition of one embedding.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseCode {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
    pub origin_id: String,
}

impl SparseCode {
    /// Builds a code from arbitrary `(latent, activation)` pairs; drops
    /// non-positive activations and sorts by latent.
    pub fn from_pairs(origin_id: impl Into<String>, mut pairs: Vec<(u32, f32)>) -> Self {
        pairs.retain(|&(_, v)| v > 0.0);
        pairs.sort_by_key(|&(i, _)| i);
        pairs.dedup_by_key(|&mut (i, _)| i);
        let (indices, values) = pairs.into_iter().unzip();
        SparseCode { indices, values, origin_id: origin_id.into() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, latent: u32) -> Option<f32> {
        self.indices.binary_search(&latent).ok().map(|p| self.values[p])
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum()
    }

    pub fn check(&self, m: usize) -> Result<()> {
        if self.indices.len() != self.values.len() {
            return Err(Error::invalid("sparse code: indices and values differ in length"));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sparse code: indices not strictly increasing"));
        }
        if let Some(&last) = self.indices.last() {
            if last as usize >= m {
                return Err(Error::invalid(format!("sparse code: latent {last} out of range for m={m}")));
            }
        }
        if self.values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("sparse code: activations must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SaeParams {
    pub fn zeros(d: usize, m: usize) -> Self {
        SaeParams {
            d,
            m,
            w_enc: vec![0.0; m * d],
            b_enc: vec![0.0; m],
            w_dec: vec![0.0; m * d],
            b_dec: vec![0.0; d],
        }
    }

    pub fn enc_row(&self, j: usize) -> &[f64] {
        &self.w_enc[j * self.d..(j + 1) * self.d]
    }

    pub fn dec_row(&self, j: usize) -> &[f64] {
        &self.w_dec[j * self.d..(j + 1) * self.d]
    }

    pub fn all_finite(&self) -> bool {
        self.w_enc.iter().chain(&self.b_enc).chain(&self.w_dec).chain(&self.b_dec).all(|x| x.is_finite())
    }

    /// Rescales every decoder atom to unit Euclidean norm.
    pub fn normalize_decoder(&mut self) {
        let d = self.d;
        for row in self.w_dec.chunks_exact_mut(d) {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
    }

    pub fn max_atom_norm_error(&self) -> f64 {
        self.w_dec
            .chunks_exact(self.d)
            .map(|r| (r.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Pre-activations `W_enc·h + b_enc` for a single input.
    pub fn pre_activation(&self, h: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.enc_row(j), h) + self.b_enc[j];
        }
    }
}

/// Decoder atoms uniform on the unit sphere, encoder rows equal to the
/// atoms, zero encoder bias. `b_dec` is the mean of `sample` when given.
pub fn init_params(config: &SaeConfig, sample: Option<&[f64]>) -> Result<SaeParams> {
    config.validate()?;
    let (d, m) = (config.d, config.m);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut p = SaeParams::zeros(d, m);
    for x in p.w_dec.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
    p.normalize_decoder();
    p.w_enc.copy_from_slice(&p.w_dec);
    if let Some(sample) = sample {
        if sample.is_empty() || sample.len() % d != 0 {
            return Err(Error::DimMismatch { expected: d, actual: sample.len() % d.max(1) });
        }
        let n = (sample.len() / d) as f64;
        for row in sample.chunks_exact(d) {
            for (b, x) in p.b_dec.iter_mut().zip(row) {
                *b += x;
            }
        }
        p.b_dec.iter_mut().for_each(|b| *b /= n);
    }
    Ok(p)
}

/// Row-wise `W_enc·H_i + b_enc` for a flat `n × d` batch; returns `n × m`.
pub fn encode_pre(params: &SaeParams, batch: &[f64]) -> Result<Vec<f64>> {
    encode_pre_with(Exec::default(), params, batch)
}

pub fn encode_pre_with(exec: Exec, params: &SaeParams, batch: &[f64]) -> Result<Vec<f64>> {
    let (d, m) = (params.d, params.m);
    if !batch.len().is_multiple_of(d) {
        return Err(Error::DimMismatch { expected: d, actual: batch.len() % d });
    }
    let rows = exec.map_chunks(batch, d, 32, |_, chunk| {
        let mut out = vec![0.0; (chunk.len() / d) * m];
        for (h, o) in chunk.chunks_exact(d).zip(out.chunks_exact_mut(m)) {
            params.pre_activation(h, o);
        }
        out
    });
    Ok(rows.concat())
}

/// Keeps every latent whose pre-activation is positive and above `theta`.
pub fn encode_infer(params: &SaeParams, h: &[f64], theta: f64, origin_id: &str) -> Result<SparseCode> {
    if h.len() != params.d {
        return Err(Error::DimMismatch { expected: params.d, actual: h.len() });
    }
    let mut pre = vec![0.0; params.m];
    params.pre_activation(h, &mut pre);
    Ok(threshold_code(&pre, theta, origin_id))
}

pub(crate) fn threshold_code(pre: &[f64], theta: f64, origin_id: &str) -> SparseCode {
    let mut code = SparseCode { origin_id: origin_id.to_string(), ..Default::default() };
    for (j, &a) in pre.iter().enumerate() {
        if a > theta && a > 0.0 {
            let v = a as f32;
            // an activation that rounds to zero in f32 is not kept
            if v > 0.0 {
                code.indices.push(j as u32);
                code.values.push(v);
            }
        }
    }
    code
}

/// Encodes every row of `store`, preserving row order.
pub fn encode_store(exec: Exec, params: &SaeParams, theta: f64, store: &EmbeddingStore) -> Result<Vec<SparseCode>> {
    if store.dim() != params.d {
        return Err(Error::DimMismatch { expected: params.d, actual: store.dim() });
    }
    Ok(exec.map_range(store.len(), |i| {
        let h: Vec<f64> = store.row(i).iter().map(|&x| f64::from(x)).collect();
        let mut pre = vec![0.0; params.m];
        params.pre_activation(&h, &mut pre);
        threshold_code(&pre, theta, store.id(i))
    }))
}

/// `b_dec + Σ values_i · W_dec[indices_i]`.
pub fn decode(params: &SaeParams, code: &SparseCode) -> Result<Vec<f64>> {
    let mut out = params.b_dec.clone();
    for (j, v) in code.iter() {
        if j as usize >= params.m {
            return Err(Error::invalid(format!("decode: latent {j} out of range for m={}", params.m)));
        }
        let v = f64::from(v);
        for (o, w) in out.iter_mut().zip(params.dec_row(j as usize)) {
            *o += v * w;
        }
    }
    Ok(out)
}
