//! BatchTopK: keep the `n·k` largest rectified pre-activations of a batch.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Surviving activations of one batch, per row sorted by latent id.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSelection {
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Smallest surviving activation, `None` if nothing survived.
    pub min_survivor: Option<f64>,
}

impl BatchSelection {
    pub fn active_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Descending by value, ascending by flat index on ties.
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Selects survivors from a flat `n × m` pre-activation matrix.
pub fn batch_topk_select(pre: &[f64], n: usize, m: usize, k: usize) -> Result<BatchSelection> {
    if k >= m {
        return Err(Error::invalid(format!("batch top-k: k ({k}) must be < m ({m})")));
    }
    if pre.len() != n * m {
        return Err(Error::DimMismatch { expected: n * m, actual: pre.len() });
    }
    let mut cand: Vec<(f64, usize)> = pre.iter().copied().enumerate().filter(|(_, v)| *v > 0.0).map(|(i, v)| (v, i)).collect();
    let budget = n * k;
    if cand.len() > budget {
        if budget == 0 {
            cand.clear();
        } else {
            cand.select_nth_unstable_by(budget - 1, rank_order);
            cand.truncate(budget);
        }
    }
    let min_survivor = cand.iter().map(|c| c.0).reduce(f64::min);
    let mut rows = vec![Vec::new(); n];
    cand.sort_unstable_by_key(|c| c.1);
    for (v, flat) in cand {
        rows[flat / m].push((flat % m, v));
    }
    Ok(BatchSelection { rows, min_survivor })
}

/// Dense form: survivors keep their value, everything else becomes 0.
pub fn batch_topk_mask(pre: &[f64], n: usize, m: usize, k: usize) -> Result<Vec<f64>> {
    let sel = batch_topk_select(pre, n, m, k)?;
    let mut out = vec![0.0; n * m];
    for (i, row) in sel.rows.iter().enumerate() {
        for &(j, v) in row {
            out[i * m + j] = v;
        }
    }
    Ok(out)
}
