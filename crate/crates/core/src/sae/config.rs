use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse autoencoder hyperparameters.
///
/// [`SaeConfig::new`] fills in the published training defaults (AdamW at
/// 5e-5, batch 4096, 100 epochs, aux weight 0.0625, 20-step dead window,
/// 2k aux latents). Desk-scale runs override batch size, epochs and learning
/// rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dead_window: u64,
    pub aux_width: usize,
    pub seed: u64,
}

pub const DEFAULT_LAMBDA: f64 = 0.0625;
pub const DEFAULT_LR: f64 = 5e-5;
pub const DEFAULT_BATCH_SIZE: usize = 4096;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_DEAD_WINDOW: u64 = 20;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 6e-10;

impl SaeConfig {
    /// Published defaults with `m = 32·d`.
    pub fn full_scale(d: usize, k: usize) -> Self {
        Self::new(d, 32 * d, k)
    }

    pub fn new(d: usize, m: usize, k: usize) -> Self {
        SaeConfig {
            d,
            m,
            k,
            lambda: DEFAULT_LAMBDA,
            lr: DEFAULT_LR,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            dead_window: DEFAULT_DEAD_WINDOW,
            aux_width: 2 * k,
            seed: 0,
        }
    }

    /// Settings that converge in seconds on a few thousand rows.
    pub fn desk(d: usize, m: usize, k: usize) -> Self {
        SaeConfig { lr: 2e-3, batch_size: 256, epochs: 120, ..Self::new(d, m, k) }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("sae: d must be positive"));
        }
        if self.m < self.d {
            return Err(Error::invalid(format!("sae: m ({}) must be ≥ d ({})", self.m, self.d)));
        }
        if self.k == 0 || self.k >= self.m {
            return Err(Error::invalid(format!("sae: need 1 ≤ k < m, got k={} m={}", self.k, self.m)));
        }
        if !(self.lambda >= 0.0) || !(self.lr > 0.0) {
            return Err(Error::invalid("sae: lambda must be ≥ 0 and lr > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("sae: batch_size must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_defaults() {
        let c = SaeConfig::full_scale(768, 32);
        assert_eq!(c.m, 24576);
        assert_eq!(c.lambda, 0.0625);
        assert_eq!(c.dead_window, 20);
        assert_eq!(c.aux_width, 64);
        assert_eq!(c.lr, 5e-5);
        assert_eq!(c.batch_size, 4096);
        assert_eq!(c.epochs, 100);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        assert!(SaeConfig::new(4, 3, 1).validate().is_err());
        assert!(SaeConfig::new(4, 8, 8).validate().is_err());
        assert!(SaeConfig::new(4, 8, 0).validate().is_err());
        assert!(SaeConfig { lambda: -1.0, ..SaeConfig::new(4, 8, 2) }.validate().is_err());
    }
}
