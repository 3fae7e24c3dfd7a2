use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Saturation and length-normalization constants of the concept scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    pub k1: f64,
    pub b: f64,
    pub k2: f64,
}

impl ScoringParams {
    /// Tuned for k = 32 latents, indexed with cap 24.
    pub const EFFICIENT: ScoringParams = ScoringParams { k1: 0.6, b: 1.75, k2: 2.5 };
    pub const K48: ScoringParams = ScoringParams { k1: 0.6, b: 1.25, k2: 2.0 };
    pub const K64: ScoringParams = ScoringParams { k1: 0.4, b: 0.75, k2: 2.5 };
    /// Tuned for k = 128 latents, indexed with cap 65.
    pub const MAX: ScoringParams = ScoringParams { k1: 0.2, b: 3.0, k2: 0.5 };

    pub const EFFICIENT_CAP: usize = 24;
    pub const MAX_CAP: usize = 65;

    pub fn preset_for_k(k: usize) -> Option<ScoringParams> {
        match k {
            32 => Some(Self::EFFICIENT),
            48 => Some(Self::K48),
            64 => Some(Self::K64),
            128 => Some(Self::MAX),
            _ => None,
        }
    }

    pub fn preset(name: &str) -> Option<(ScoringParams, Option<usize>)> {
        match name {
            "efficient" => Some((Self::EFFICIENT, Some(Self::EFFICIENT_CAP))),
            "max" => Some((Self::MAX, Some(Self::MAX_CAP))),
            "k48" => Some((Self::K48, None)),
            "k64" => Some((Self::K64, None)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) || !(self.b >= 0.0) || !(self.k2 > 0.0) {
            return Err(Error::invalid(format!("scoring params need k1 > 0, b ≥ 0, k2 > 0: {self:?}")));
        }
        Ok(())
    }
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self::EFFICIENT
    }
}

/// Query-side saturation `z(1+k2)/(z+k2)`.
pub fn f_q(z: f64, k2: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    z * (1.0 + k2) / (z + k2)
}

/// Document-side saturation with activation-mass length normalization.
pub fn f_d(z: f64, doc_mass: f64, avg_mass: f64, k1: f64, b: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    z * (1.0 + k1) / (z + k1 * (1.0 - b + b * doc_mass / avg_mass))
}

/// `ln(|D| / (1 + df))`.
pub fn concept_idf(n_docs: usize, df: usize) -> f64 {
    (n_docs as f64 / (1.0 + df as f64)).ln()
}

/// Additive contribution of one shared latent.
#[inline]
pub fn contribution(zq: f64, zd: f64, doc_mass: f64, avg_mass: f64, idf: f64, p: &ScoringParams) -> f64 {
    f_q(zq, p.k2) * f_d(zd, doc_mass, avg_mass, p.k1, p.b) * idf
}
