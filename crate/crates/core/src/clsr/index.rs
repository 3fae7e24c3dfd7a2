//! Capped concept inverted index and its `CLSR` file format.
//!
//! ```text
//! header (64 bytes)
//!   magic "CLSR", version u32, m u32, n_docs u32, n_lists u32, cap u32,
//!   avg_mass f64, config digest [u8; 32]
//! id table     n_docs × (u32 len, UTF-8)
//! doc mass     n_docs × f64
//! lists        n_lists × (latent varint, idf f64, count varint,
//!                         count × doc-id gap varint, count × f32 activation)
//! ```
//!
//! Only latents with at least one posting are written; an empty index is
//! exactly the header.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::scoring::{concept_idf, contribution, ScoringParams};
use crate::binio::{put_f32, put_f64, put_string, put_u32, put_varint, ByteReader};
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::run::{RankedList, SearchResult, SearchStatus};
use crate::sae::SparseCode;

pub const CLSR_MAGIC: &[u8; 4] = b"CLSR";
pub const CLSR_VERSION: u32 = 1;
pub const CLSR_HEADER_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PostingList {
    pub docs: Vec<u32>,
    pub acts: Vec<f32>,
}

impl PostingList {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc: u32) -> Option<f32> {
        self.docs.binary_search(&doc).ok().map(|i| self.acts[i])
    }
}

/// One shared latent's share of a query–document score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contribution {
    pub latent: u32,
    pub query_act: f64,
    pub doc_act: f64,
    pub f_q: f64,
    pub f_d: f64,
    pub idf: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptIndex {
    pub m: usize,
    pub cap: usize,
    pub doc_ids: Vec<String>,
    pub doc_mass: Vec<f64>,
    pub avg_mass: f64,
    pub idf: Vec<f64>,
    pub postings: Vec<PostingList>,
    pub digest: Digest,
}

/// The `cap` highest activations of `code`, ties to the lower latent id,
/// returned in latent order.
pub fn cap_code(code: &SparseCode, cap: usize) -> Vec<(u32, f32)> {
    let mut pairs: Vec<(u32, f32)> = code.iter().collect();
    if pairs.len() > cap {
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        pairs.truncate(cap);
        pairs.sort_unstable_by_key(|p| p.0);
    }
    pairs
}

impl ConceptIndex {
    /// Builds the index over `codes` (one per document, in doc order).
    pub fn build(exec: Exec, codes: &[SparseCode], m: usize, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::invalid("index cap must be ≥ 1"));
        }
        for c in codes {
            c.check(m)?;
        }
        let capped: Vec<Vec<(u32, f32)>> = exec.map_slice(codes, |c| cap_code(c, cap));
        let mut postings = vec![PostingList::default(); m];
        let mut doc_mass = Vec::with_capacity(codes.len());
        for (doc, pairs) in capped.iter().enumerate() {
            let mut mass = 0.0;
            for &(j, a) in pairs {
                postings[j as usize].docs.push(doc as u32);
                postings[j as usize].acts.push(a);
                mass += f64::from(a);
            }
            doc_mass.push(mass);
        }
        let n = codes.len();
        let avg_mass = if n == 0 { 0.0 } else { doc_mass.iter().sum::<f64>() / n as f64 };
        let idf = postings.iter().map(|p| concept_idf(n, p.len())).collect();
        Ok(ConceptIndex {
            m,
            cap,
            doc_ids: codes.iter().map(|c| c.origin_id.clone()).collect(),
            doc_mass,
            avg_mass,
            idf,
            postings,
            digest: Digest::ZERO,
        })
    }

    pub fn with_digest(mut self, digest: Digest) -> Self {
        self.digest = digest;
        self
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn df(&self, latent: u32) -> usize {
        self.postings.get(latent as usize).map_or(0, PostingList::len)
    }

    /// Documents indexed with no latent at all.
    pub fn empty_docs(&self) -> usize {
        self.doc_mass.iter().filter(|&&m| m == 0.0).count()
    }

    pub fn posting_entries(&self) -> usize {
        self.postings.iter().map(PostingList::len).sum()
    }

    /// Mean number of indexed latents per document.
    pub fn avg_doc_latents(&self) -> f64 {
        if self.n_docs() == 0 {
            0.0
        } else {
            self.posting_entries() as f64 / self.n_docs() as f64
        }
    }

    pub fn doc_position(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids.iter().position(|d| d == doc_id).map(|p| p as u32)
    }

    /// Indexed latents of one document, in latent order.
    pub fn doc_latents(&self, doc: u32) -> Vec<(u32, f32)> {
        self.postings
            .iter()
            .enumerate()
            .filter_map(|(j, p)| p.get(doc).map(|a| (j as u32, a)))
            .collect()
    }

    fn check_query(&self, q: &SparseCode) -> Result<()> {
        q.check(self.m)
    }

    /// Per-latent breakdown of `score(q, doc)`, in latent order.
    pub fn contributions(&self, q: &SparseCode, doc: u32, params: &ScoringParams) -> Vec<Contribution> {
        let mass = self.doc_mass[doc as usize];
        q.iter()
            .filter_map(|(j, zq)| {
                let zd = self.postings.get(j as usize)?.get(doc)?;
                let (zq, zd) = (f64::from(zq), f64::from(zd));
                let idf = self.idf[j as usize];
                let fq = super::scoring::f_q(zq, params.k2);
                let fd = super::scoring::f_d(zd, mass, self.avg_mass, params.k1, params.b);
                Some(Contribution {
                    latent: j,
                    query_act: zq,
                    doc_act: zd,
                    f_q: fq,
                    f_d: fd,
                    idf,
                    product: contribution(zq, zd, mass, self.avg_mass, idf, params),
                })
            })
            .collect()
    }

    /// Score of one document; shared latents summed in latent order.
    pub fn score(&self, q: &SparseCode, doc: u32, params: &ScoringParams) -> f64 {
        let mass = self.doc_mass[doc as usize];
        let mut s = 0.0;
        for (j, zq) in q.iter() {
            if let Some(zd) = self.postings.get(j as usize).and_then(|p| p.get(doc)) {
                s += contribution(f64::from(zq), f64::from(zd), mass, self.avg_mass, self.idf[j as usize], params);
            }
        }
        s
    }

    /// Term-at-a-time traversal; exact over every doc sharing a latent.
    pub fn search(&self, q: &SparseCode, params: &ScoringParams, top_n: usize) -> Result<SearchResult> {
        self.check_query(q)?;
        if q.is_empty() {
            return Ok(SearchResult {
                status: SearchStatus::EmptyQuery,
                list: RankedList { query_id: q.origin_id.clone(), entries: Vec::new() },
            });
        }
        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched = vec![false; self.n_docs()];
        let mut hits = Vec::new();
        for (j, zq) in q.iter() {
            let post = &self.postings[j as usize];
            let idf = self.idf[j as usize];
            for (&doc, &zd) in post.docs.iter().zip(&post.acts) {
                let d = doc as usize;
                acc[d] += contribution(f64::from(zq), f64::from(zd), self.doc_mass[d], self.avg_mass, idf, params);
                if !touched[d] {
                    touched[d] = true;
                    hits.push(doc);
                }
            }
        }
        let scored = hits.into_iter().map(|d| (d, acc[d as usize])).collect();
        let list = RankedList::from_positions(q.origin_id.clone(), scored, |d| self.doc_ids[d as usize].as_str(), top_n);
        Ok(SearchResult { status: SearchStatus::Ok, list })
    }

    pub fn search_all(&self, exec: Exec, queries: &[SparseCode], params: &ScoringParams, top_n: usize) -> Result<Vec<SearchResult>> {
        exec.map_slice(queries, |q| self.search(q, params, top_n)).into_iter().collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let lists: Vec<usize> = (0..self.m).filter(|&j| !self.postings[j].is_empty()).collect();
        let mut out = Vec::with_capacity(CLSR_HEADER_LEN + self.posting_entries() * 6 + self.n_docs() * 16);
        out.extend_from_slice(CLSR_MAGIC);
        put_u32(&mut out, CLSR_VERSION);
        put_u32(&mut out, self.m as u32);
        put_u32(&mut out, self.n_docs() as u32);
        put_u32(&mut out, lists.len() as u32);
        put_u32(&mut out, self.cap as u32);
        put_f64(&mut out, self.avg_mass);
        out.extend_from_slice(&self.digest.0);
        debug_assert_eq!(out.len(), CLSR_HEADER_LEN);
        for id in &self.doc_ids {
            put_string(&mut out, id);
        }
        for &mass in &self.doc_mass {
            put_f64(&mut out, mass);
        }
        for j in lists {
            let p = &self.postings[j];
            put_varint(&mut out, j as u64);
            put_f64(&mut out, self.idf[j]);
            put_varint(&mut out, p.len() as u64);
            let mut prev = 0u32;
            for &doc in &p.docs {
                put_varint(&mut out, u64::from(doc - prev));
                prev = doc;
            }
            for &a in &p.acts {
                put_f32(&mut out, a);
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        if &r.array::<4>("magic")? != CLSR_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"CLSR\""));
        }
        let version = r.u32("version")?;
        if version != CLSR_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let m = r.u32("m")? as usize;
        let n_docs = r.u32("n_docs")? as usize;
        let n_lists = r.u32("n_lists")? as usize;
        let cap = r.u32("cap")? as usize;
        let avg_mass = r.f64("avg_mass")?;
        let digest = Digest(r.array::<32>("digest")?);
        if n_docs > r.remaining() / 4 || n_lists > m {
            return Err(Error::format(r.offset(), "section counts exceed file size"));
        }
        let doc_ids = (0..n_docs).map(|_| r.string("id table")).collect::<Result<Vec<_>>>()?;
        let doc_mass = r.f64_vec(n_docs, "doc mass")?;
        let mut postings = vec![PostingList::default(); m];
        let mut idf: Vec<f64> = (0..m).map(|_| concept_idf(n_docs, 0)).collect();
        let mut last: Option<usize> = None;
        for _ in 0..n_lists {
            let at = r.offset();
            let j = r.varint("latent id")? as usize;
            if j >= m || last.is_some_and(|l| j <= l) {
                return Err(Error::format(at, format!("latent {j} out of order or range")));
            }
            last = Some(j);
            idf[j] = r.f64("idf")?;
            let count = r.varint("posting count")? as usize;
            if count > n_docs {
                return Err(Error::format(at, "posting longer than the corpus"));
            }
            let mut docs = Vec::with_capacity(count);
            let mut cur = 0u64;
            for _ in 0..count {
                cur += r.varint("doc gap")?;
                if cur as usize >= n_docs {
                    return Err(Error::format(r.offset(), "doc id out of range"));
                }
                docs.push(cur as u32);
            }
            let acts = (0..count).map(|_| r.f32("activation")).collect::<Result<Vec<_>>>()?;
            postings[j] = PostingList { docs, acts };
        }
        if r.remaining() != 0 {
            return Err(Error::format(r.offset(), format!("{} trailing bytes", r.remaining())));
        }
        Ok(ConceptIndex { m, cap, doc_ids, doc_mass, avg_mass, idf, postings, digest })
    }

    /// Exact size of the serialized index in bytes.
    pub fn storage_bytes(&self) -> usize {
        self.to_bytes().len()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

/// Expected shared-latent count per query–document pair:
/// `Σ_j P(j active in query) · P(j indexed for doc)`.
pub fn flops_estimate(queries: &[SparseCode], index: &ConceptIndex) -> Result<f64> {
    if index.n_docs() == 0 {
        return Err(Error::invalid("flops estimate over an empty index"));
    }
    if queries.is_empty() {
        return Err(Error::invalid("flops estimate over an empty query set"));
    }
    let mut qfreq = vec![0usize; index.m];
    for q in queries {
        for &j in &q.indices {
            if let Some(f) = qfreq.get_mut(j as usize) {
                *f += 1;
            }
        }
    }
    let (nq, nd) = (queries.len() as f64, index.n_docs() as f64);
    Ok(qfreq
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 0)
        .map(|(j, &f)| (f as f64 / nq) * (index.postings[j].len() as f64 / nd))
        .sum())
}
