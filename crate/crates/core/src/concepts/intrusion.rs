//! Latent intrusion test: nine top activators of a latent plus one passage
//! where the latent is silent; a judge has to spot the odd one out.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::llm::{parse_intruder, render_intrusion, LlmClient};
use super::stats::latent_lists;
use crate::error::{Error, Result};
use crate::ingest::{Corpus, EmbeddingStore};
use crate::lexical::tokenize;
use crate::sae::SparseCode;

pub const ACTIVATING: usize = 9;
pub const CANDIDATES: usize = ACTIVATING + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Sae,
    /// Raw embedding dimensions, rectified, stand in for latents.
    Neuron,
}

/// Codes whose "latents" are the positive coordinates of each embedding.
pub fn neuron_codes(store: &EmbeddingStore) -> Vec<SparseCode> {
    (0..store.len())
        .map(|i| {
            let pairs = store.row(i).iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(j, &x)| (j as u32, x)).collect();
            SparseCode::from_pairs(store.id(i), pairs)
        })
        .collect()
}

pub enum Judge<'a> {
    /// Knows the answer.
    Oracle,
    /// Uniform over the ten candidates.
    Random { seed: u64 },
    /// Picks the passage farthest from the token centroid of the other nine.
    Offline,
    Llm(&'a dyn LlmClient),
}

impl Judge<'_> {
    pub fn name(&self) -> String {
        match self {
            Judge::Oracle => "oracle".into(),
            Judge::Random { .. } => "random".into(),
            Judge::Offline => "offline".into(),
            Judge::Llm(c) => format!("llm:{}", c.model_name()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntrusionTrial {
    pub latent: u32,
    pub doc_ids: Vec<String>,
    pub intruder: usize,
    pub picked: Option<usize>,
    pub correct: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedLatent {
    pub latent: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntrusionReport {
    pub basis: Basis,
    pub judge: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Trials whose judge answer could not be parsed; counted as wrong.
    pub unparsed: usize,
    pub skipped: Vec<SkippedLatent>,
    pub trials: Vec<IntrusionTrial>,
}

#[derive(Debug, Clone, Copy)]
pub struct IntrusionConfig {
    pub trials_per_latent: usize,
    pub seed: u64,
}

impl Default for IntrusionConfig {
    fn default() -> Self {
        IntrusionConfig { trials_per_latent: 1, seed: 0 }
    }
}

fn token_vector(text: &str) -> BTreeMap<String, f64> {
    let mut v: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokenize(text) {
        *v.entry(t).or_default() += 1.0;
    }
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.values_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Index of the passage farthest (Euclidean) from the mean token vector of
/// the others; ties to the lower index.
pub fn offline_pick(passages: &[&str]) -> usize {
    let vecs: Vec<_> = passages.iter().map(|p| token_vector(p)).collect();
    let n = vecs.len();
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..n {
        let mut centroid: BTreeMap<&str, f64> = BTreeMap::new();
        for (_, v) in vecs.iter().enumerate().filter(|(k, _)| *k != i) {
            for (t, x) in v {
                *centroid.entry(t.as_str()).or_default() += x / (n - 1) as f64;
            }
        }
        let mut d2: f64 = centroid.iter().map(|(t, c)| {
            let x = vecs[i].get(*t).copied().unwrap_or(0.0);
            (x - c) * (x - c)
        }).sum();
        d2 += vecs[i].iter().filter(|(t, _)| !centroid.contains_key(t.as_str())).map(|(_, x)| x * x).sum::<f64>();
        if d2 > best.1 {
            best = (i, d2);
        }
    }
    best.0
}

/// Runs the test on `latents`. `codes` and `corpus` must list the same
/// documents in the same order.
pub fn intrusion_test(
    corpus: &Corpus,
    codes: &[SparseCode],
    m: usize,
    latents: &[u32],
    basis: Basis,
    judge: &Judge<'_>,
    config: IntrusionConfig,
) -> Result<IntrusionReport> {
    if corpus.len() != codes.len() {
        return Err(Error::DimMismatch { expected: corpus.len(), actual: codes.len() });
    }
    if let Some((p, c)) = corpus.passages.iter().zip(codes).find(|(p, c)| p.id != c.origin_id) {
        return Err(Error::invalid(format!("corpus doc `{}` lines up with code `{}`", p.id, c.origin_id)));
    }
    let lists = latent_lists(codes, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut judge_rng = match judge {
        Judge::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut trials = Vec::new();
    let mut skipped = Vec::new();
    let mut unparsed = 0;
    for &j in latents {
        let Some(list) = lists.get(j as usize) else {
            return Err(Error::Unknown { kind: "latent", id: j.to_string() });
        };
        if list.len() < ACTIVATING {
            skipped.push(SkippedLatent { latent: j, reason: format!("only {} activating passages", list.len()) });
            continue;
        }
        if list.len() == codes.len() {
            skipped.push(SkippedLatent { latent: j, reason: "active on every passage, no intruder".into() });
            continue;
        }
        let mut top = list.clone();
        top.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| codes[a.0 as usize].origin_id.cmp(&codes[b.0 as usize].origin_id)));
        top.truncate(ACTIVATING);
        let active: std::collections::HashSet<u32> = list.iter().map(|e| e.0).collect();
        let silent: Vec<u32> = (0..codes.len() as u32).filter(|d| !active.contains(d)).collect();
        for _ in 0..config.trials_per_latent {
            let intruder_doc = silent[rng.random_range(0..silent.len())];
            let mut docs: Vec<u32> = top.iter().map(|e| e.0).chain([intruder_doc]).collect();
            docs.shuffle(&mut rng);
            let intruder = docs.iter().position(|&d| d == intruder_doc).expect("intruder placed");
            let texts: Vec<&str> = docs.iter().map(|&d| corpus.passages[d as usize].text.as_str()).collect();
            let picked = match judge {
                Judge::Oracle => Some(intruder),
                Judge::Random { .. } => judge_rng.as_mut().map(|r| r.random_range(0..CANDIDATES)),
                Judge::Offline => Some(offline_pick(&texts)),
                Judge::Llm(client) => {
                    let raw = client.complete(&render_intrusion(&texts))?;
                    match parse_intruder(&raw) {
                        Ok(n) if n <= CANDIDATES => Some(n - 1),
                        _ => {
                            unparsed += 1;
                            None
                        }
                    }
                }
            };
            trials.push(IntrusionTrial {
                latent: j,
                doc_ids: docs.iter().map(|&d| codes[d as usize].origin_id.clone()).collect(),
                intruder,
                picked,
                correct: picked == Some(intruder),
            });
        }
    }
    let correct = trials.iter().filter(|t| t.correct).count();
    let total = trials.len();
    Ok(IntrusionReport {
        basis,
        judge: judge.name(),
        total,
        correct,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        unparsed,
        skipped,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Passage;

    fn fixture(n: usize) -> (Corpus, Vec<SparseCode>) {
        let words = ["red", "green", "blue"];
        let mut passages = Vec::new();
        let mut codes = Vec::new();
        for i in 0..n {
            let t = i % 3;
            passages.push(Passage { id: format!("d{i:02}"), text: format!("{} {} thing", words[t], words[t]) });
            codes.push(SparseCode::from_pairs(format!("d{i:02}"), vec![(t as u32, 1.0 + i as f32 * 0.01)]));
        }
        (Corpus { passages, source_path: String::new() }, codes)
    }

    #[test]
    fn oracle_scores_one_and_prompt_shape_holds() {
        let (c, codes) = fixture(30);
        let r = intrusion_test(&c, &codes, 3, &[0, 1, 2], Basis::Sae, &Judge::Oracle, IntrusionConfig { trials_per_latent: 4, seed: 1 }).unwrap();
        assert_eq!(r.total, 12);
        assert_eq!(r.accuracy, 1.0);
        for t in &r.trials {
            assert_eq!(t.doc_ids.len(), CANDIDATES);
            let zero: Vec<_> = t.doc_ids.iter().filter(|d| codes.iter().find(|c| &c.origin_id == *d).unwrap().get(t.latent).is_none()).collect();
            assert_eq!(zero.len(), 1);
            assert_eq!(zero[0], &t.doc_ids[t.intruder]);
        }
    }

    #[test]
    fn skips_thin_latents() {
        let (c, codes) = fixture(12);
        let r = intrusion_test(&c, &codes, 4, &[0, 3], Basis::Sae, &Judge::Oracle, IntrusionConfig::default()).unwrap();
        assert_eq!(r.total, 0);
        assert_eq!(r.skipped.len(), 2);
        assert!(intrusion_test(&c, &codes, 4, &[9], Basis::Sae, &Judge::Oracle, IntrusionConfig::default()).is_err());
    }

    #[test]
    fn offline_judge_on_single_topic_fixture() {
        let (c, codes) = fixture(60);
        let r = intrusion_test(&c, &codes, 3, &[0, 1, 2], Basis::Sae, &Judge::Offline, IntrusionConfig { trials_per_latent: 20, seed: 3 }).unwrap();
        assert!(r.accuracy > 0.9, "{}", r.accuracy);
    }

    #[test]
    fn offline_pick_finds_odd_text() {
        let mut p = vec!["cat cat"; 9];
        p.insert(4, "dog");
        assert_eq!(offline_pick(&p), 4);
    }

    #[test]
    fn neuron_codes_keep_positive_dims() {
        let store = EmbeddingStore::from_rows(vec!["a".into()], &[vec![0.5, -1.0, 0.0, 2.0]]).unwrap();
        let c = neuron_codes(&store);
        assert_eq!(c[0].indices, vec![0, 3]);
    }
}
