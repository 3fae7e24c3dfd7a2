use serde::{Deserialize, Serialize};

use crate::clsr::concept_idf;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sae::SparseCode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStats {
    pub latent_id: u32,
    pub df: usize,
    pub idf: f64,
    /// Highest activations, descending, ties by doc id.
    pub top_passages: Vec<(String, f32)>,
}

/// Statistics for every latent of a dictionary, indexed by latent id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptStats {
    pub n_docs: usize,
    pub latents: Vec<LatentStats>,
}

impl ConceptStats {
    pub fn get(&self, latent: u32) -> Result<&LatentStats> {
        self.latents
            .get(latent as usize)
            .ok_or_else(|| Error::Unknown { kind: "latent", id: latent.to_string() })
    }

    pub fn m(&self) -> usize {
        self.latents.len()
    }

    /// Latents that fired on at least one document.
    pub fn alive(&self) -> impl Iterator<Item = &LatentStats> {
        self.latents.iter().filter(|s| s.df > 0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

fn by_activation(a: &(String, f32), b: &(String, f32)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Positive activations of each latent: `lists[j]` holds `(doc position, act)`.
pub(crate) fn latent_lists(codes: &[SparseCode], m: usize) -> Result<Vec<Vec<(u32, f32)>>> {
    let mut lists = vec![Vec::new(); m];
    for (doc, c) in codes.iter().enumerate() {
        c.check(m)?;
        for (j, a) in c.iter() {
            if a > 0.0 {
                lists[j as usize].push((doc as u32, a));
            }
        }
    }
    Ok(lists)
}

pub fn compute_stats(exec: Exec, codes: &[SparseCode], m: usize, top_capacity: usize) -> Result<ConceptStats> {
    if codes.is_empty() {
        return Err(Error::invalid("concept stats need at least one document"));
    }
    let lists = latent_lists(codes, m)?;
    let n = codes.len();
    let latents = exec.map_range(m, |j| {
        let list = &lists[j];
        let mut top: Vec<(String, f32)> = list.iter().map(|&(d, a)| (codes[d as usize].origin_id.clone(), a)).collect();
        top.sort_by(by_activation);
        top.truncate(top_capacity);
        LatentStats { latent_id: j as u32, df: list.len(), idf: concept_idf(n, list.len()), top_passages: top }
    });
    Ok(ConceptStats { n_docs: n, latents })
}

/// Activations scaled by their latent's idf, largest first (ties by latent id).
pub fn idf_weighted(code: &SparseCode, stats: &ConceptStats) -> Result<Vec<(u32, f64)>> {
    let mut out = code
        .iter()
        .map(|(j, a)| Ok((j, f64::from(a) * stats.get(j)?.idf)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Top `n` documents by activation on `latent`; empty if it never fired.
pub fn top_activating(codes: &[SparseCode], latent: u32, n: usize) -> Vec<(String, f32)> {
    let mut hits: Vec<(String, f32)> = codes
        .iter()
        .filter_map(|c| c.get(latent).filter(|&a| a > 0.0).map(|a| (c.origin_id.clone(), a)))
        .collect();
    hits.sort_by(by_activation);
    hits.truncate(n);
    hits
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(id: &str, pairs: &[(u32, f32)]) -> SparseCode {
        SparseCode::from_pairs(id, pairs.to_vec())
    }

    #[test]
    fn idf_boundaries() {
        let mut codes: Vec<SparseCode> = (0..100).map(|i| code(&format!("d{i:03}"), &[])).collect();
        for c in codes.iter_mut().take(24) {
            *c = code(&c.origin_id.clone(), &[(1, 1.0)]);
        }
        for c in codes.iter_mut().skip(1) {
            let mut pairs: Vec<(u32, f32)> = c.iter().collect();
            pairs.push((2, 0.5));
            *c = code(&c.origin_id.clone(), &pairs);
        }
        let s = compute_stats(Exec::Sequential, &codes, 3, 5).unwrap();
        assert_eq!(s.latents[0].df, 0);
        assert!((s.latents[0].idf - 100f64.ln()).abs() < 1e-12);
        assert_eq!(s.latents[1].df, 24);
        assert!((s.latents[1].idf - 4f64.ln()).abs() < 1e-12);
        assert_eq!(s.latents[2].df, 99);
        assert_eq!(s.latents[2].idf, 0.0);
        assert_eq!(s.latents[1].top_passages.len(), 5);
        assert_eq!(s.latents[1].top_passages[0].0, "d000");
        assert!(compute_stats(Exec::Sequential, &[], 3, 5).is_err());
    }

    #[test]
    fn weighting_reorders_abstract_latent() {
        let stats = ConceptStats {
            n_docs: 10,
            latents: vec![
                LatentStats { latent_id: 0, df: 0, idf: 0.2, top_passages: vec![] },
                LatentStats { latent_id: 1, df: 0, idf: 1.5, top_passages: vec![] },
            ],
        };
        let w = idf_weighted(&code("d", &[(0, 3.86), (1, 2.84)]), &stats).unwrap();
        assert_eq!(w[0].0, 1);
        assert!((w[0].1 - 4.26).abs() < 1e-6);
        assert!((w[1].1 - 0.772).abs() < 1e-6);
        assert!(matches!(idf_weighted(&code("d", &[(5, 1.0)]), &stats), Err(Error::Unknown { .. })));
    }

    #[test]
    fn top_activating_ties_and_short_lists() {
        let codes = vec![code("b", &[(0, 2.0)]), code("a", &[(0, 2.0)]), code("c", &[(0, 1.0), (1, 1.0)]), code("z", &[])];
        assert_eq!(top_activating(&codes, 0, 30), vec![("a".into(), 2.0), ("b".into(), 2.0), ("c".into(), 1.0)]);
        assert_eq!(top_activating(&codes, 0, 1).len(), 1);
        assert!(top_activating(&codes, 7, 30).is_empty());
    }
}
