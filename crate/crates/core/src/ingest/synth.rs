//! Synthetic corpora with known topic structure.
//!
//! Every topic owns a random unit "atom" in embedding space and a few
//! surface-form synonyms. A document is a random set of topics: its embedding
//! is the normalized sum of the topic atoms plus gaussian noise, and its text
//! names each topic with one randomly picked synonym. Queries are built from
//! the topic set of a gold document whose topic set is unique in the corpus,
//! using independently drawn synonyms, so dense retrieval finds the gold
//! document while term matching often does not.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Passage, QuerySet};
use super::embeddings::EmbeddingStore;
use super::qrels::Qrels;
use crate::error::{Error, Result};

/// Surface forms per topic.
pub const SYNONYMS_PER_TOPIC: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_topics: usize,
    pub d: usize,
    pub docs: usize,
    pub queries: usize,
    pub topics_per_doc: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n_topics: 32, d: 16, docs: 2000, queries: 200, topics_per_doc: 3, noise_sigma: 0.05, seed: 7 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("synth: d must be ≥ 1"));
        }
        if self.n_topics == 0 || self.topics_per_doc == 0 || self.topics_per_doc > self.n_topics {
            return Err(Error::invalid("synth: need 1 ≤ topics_per_doc ≤ n_topics"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("synth: noise_sigma must be a finite value ≥ 0"));
        }
        if self.queries > self.docs {
            return Err(Error::invalid(format!(
                "synth: {} queries need distinct gold docs but only {} docs",
                self.queries, self.docs
            )));
        }
        Ok(())
    }
}

/// Topic atoms and their surface forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTable {
    pub tokens: Vec<Vec<String>>,
    pub atoms: Vec<Vec<f64>>,
}

impl TopicTable {
    /// token → topic id, over every synonym.
    pub fn token_index(&self) -> HashMap<&str, usize> {
        let mut m = HashMap::new();
        for (t, syns) in self.tokens.iter().enumerate() {
            for s in syns {
                m.insert(s.as_str(), t);
            }
        }
        m
    }

    /// Unit-normalized sum of the atoms of `topics` (no noise).
    pub fn embed_topics(&self, topics: &[usize]) -> Option<Vec<f32>> {
        let d = self.atoms.first()?.len();
        let mut v = vec![0.0f64; d];
        for &t in topics {
            for (x, a) in v.iter_mut().zip(self.atoms.get(t)?) {
                *x += a;
            }
        }
        normalize(&mut v);
        if v.iter().all(|x| *x == 0.0) {
            return None;
        }
        Some(v.into_iter().map(|x| x as f32).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub corpus: Corpus,
    pub queries: QuerySet,
    pub qrels: Qrels,
    pub doc_embeddings: EmbeddingStore,
    pub query_embeddings: EmbeddingStore,
    pub doc_topics: Vec<Vec<usize>>,
    pub query_topics: Vec<Vec<usize>>,
    pub topics: TopicTable,
}

const CONSONANTS: &[u8] = b"bdfklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Readable pseudo-word for index `x`; injective over `x < 65^3`.
pub fn pseudo_word(mut x: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut s = String::new();
    for _ in 0..3 {
        let syl = x % base;
        x /= base;
        s.push(CONSONANTS[syl / VOWELS.len()] as char);
        s.push(VOWELS[syl % VOWELS.len()] as char);
    }
    s
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn noisy_embedding(atoms: &[Vec<f64>], topics: &[usize], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let d = atoms[0].len();
    let mut v = vec![0.0f64; d];
    for &t in topics {
        for (x, a) in v.iter_mut().zip(&atoms[t]) {
            *x += a;
        }
    }
    if sigma > 0.0 {
        for x in v.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x += sigma * z;
        }
    }
    normalize(&mut v);
    v.into_iter().map(|x| x as f32).collect()
}

fn render(topics: &[usize], table: &TopicTable, rng: &mut ChaCha8Rng) -> String {
    topics
        .iter()
        .map(|&t| table.tokens[t][rng.random_range(0..SYNONYMS_PER_TOPIC)].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let atoms: Vec<Vec<f64>> = (0..spec.n_topics)
        .map(|_| {
            let mut a: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(&mut rng)).collect();
            normalize(&mut a);
            a
        })
        .collect();
    let tokens = (0..spec.n_topics)
        .map(|t| (0..SYNONYMS_PER_TOPIC).map(|s| pseudo_word(t * SYNONYMS_PER_TOPIC + s)).collect())
        .collect();
    let topics = TopicTable { tokens, atoms };

    let mut doc_topics = Vec::with_capacity(spec.docs);
    let mut passages = Vec::with_capacity(spec.docs);
    let mut doc_rows = Vec::with_capacity(spec.docs);
    let width = spec.docs.max(1).to_string().len();
    for i in 0..spec.docs {
        let mut ts: Vec<usize> = sample(&mut rng, spec.n_topics, spec.topics_per_doc).into_vec();
        ts.sort_unstable();
        doc_rows.push(noisy_embedding(&topics.atoms, &ts, spec.noise_sigma, &mut rng));
        let text = render(&ts, &topics, &mut rng);
        passages.push(Passage { id: format!("d{i:0width$}"), text });
        doc_topics.push(ts);
    }

    // gold candidates: docs whose topic set occurs exactly once
    let mut set_count: HashMap<&[usize], usize> = HashMap::new();
    for ts in &doc_topics {
        *set_count.entry(ts.as_slice()).or_default() += 1;
    }
    let unique: Vec<usize> = (0..spec.docs).filter(|&i| set_count[doc_topics[i].as_slice()] == 1).collect();
    if unique.len() < spec.queries {
        return Err(Error::invalid(format!(
            "synth: only {} docs have a unique topic set, cannot pick {} distinct gold docs",
            unique.len(),
            spec.queries
        )));
    }
    let mut golds: Vec<usize> = sample(&mut rng, unique.len(), spec.queries).into_iter().map(|j| unique[j]).collect();
    golds.sort_unstable();

    let qwidth = spec.queries.max(1).to_string().len();
    let mut qrels = Qrels::new();
    let mut query_topics = Vec::with_capacity(spec.queries);
    let mut queries = Vec::with_capacity(spec.queries);
    let mut query_rows = Vec::with_capacity(spec.queries);
    for (j, &seed_doc) in golds.iter().enumerate() {
        let ts = doc_topics[seed_doc].clone();
        query_rows.push(noisy_embedding(&topics.atoms, &ts, spec.noise_sigma, &mut rng));
        let text = render(&ts, &topics, &mut rng);
        let qid = format!("q{j:0qwidth$}");
        qrels.insert(qid.clone(), passages[gold_for(&ts, &doc_topics)].id.clone(), 1);
        queries.push(Passage { id: qid, text });
        query_topics.push(ts);
    }

    let doc_ids = passages.iter().map(|p| p.id.clone()).collect();
    let query_ids = queries.iter().map(|p| p.id.clone()).collect();
    Ok(SynthData {
        spec: *spec,
        corpus: Corpus { passages, source_path: String::new() },
        queries: Corpus { passages: queries, source_path: String::new() },
        qrels,
        doc_embeddings: EmbeddingStore::from_rows(doc_ids, &doc_rows)?,
        query_embeddings: EmbeddingStore::from_rows(query_ids, &query_rows)?,
        doc_topics,
        query_topics,
        topics,
    })
}

/// Doc sharing the most topics with `query`, lowest index on ties.
fn gold_for(query: &[usize], doc_topics: &[Vec<usize>]) -> usize {
    let mut best = (0usize, 0usize);
    for (i, ts) in doc_topics.iter().enumerate() {
        let shared = ts.iter().filter(|t| query.contains(t)).count();
        if shared > best.1 {
            best = (i, shared);
        }
    }
    best.0
}
