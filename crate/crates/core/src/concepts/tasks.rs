//! Human interpretability tasks: pick the passage a latent summary came
//! from, or guess which of two passages the dense model ranks higher.
//! Bundles carry their answer key; only [`PublicTask`] leaves the server.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::describe::LatentDescription;
use super::stats::{idf_weighted, ConceptStats};
use crate::error::{Error, Result};
use crate::ingest::{Corpus, Qrels, QuerySet};
use crate::run::RankedList;
use crate::sae::SparseCode;

pub const EMBEDDING_CANDIDATES: usize = 10;
pub const FULL_SCALE_CUTOFF: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    EmbeddingId,
    RankingPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairSetting {
    #[serde(rename = "RP_RP")]
    RpRp,
    #[serde(rename = "RP_NRP")]
    RpNrp,
    #[serde(rename = "RN_NRP")]
    RnNrp,
}

impl PairSetting {
    pub const ALL: [PairSetting; 3] = [PairSetting::RpRp, PairSetting::RpNrp, PairSetting::RnNrp];

    pub fn as_str(self) -> &'static str {
        match self {
            PairSetting::RpRp => "RP_RP",
            PairSetting::RpNrp => "RP_NRP",
            PairSetting::RnNrp => "RN_NRP",
        }
    }
}

/// "Retrieved" means ranked within this many; full-scale corpora use 1000.
pub fn default_cutoff(n_docs: usize) -> usize {
    FULL_SCALE_CUTOFF.min(n_docs / 2).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownLatent {
    pub latent_id: u32,
    /// Activation times idf.
    pub weight: f64,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDoc {
    pub doc_id: String,
    pub text: String,
    pub latents: Vec<ShownLatent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPayload {
    EmbeddingId {
        latents: Vec<ShownLatent>,
        candidates: Vec<Candidate>,
    },
    RankingPair {
        pair_setting: PairSetting,
        cutoff: usize,
        query_id: String,
        query_text: String,
        query_latents: Vec<ShownLatent>,
        docs: [PairDoc; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBundle {
    pub task_id: String,
    pub payload: TaskPayload,
    /// Doc id of the correct choice. Server side only.
    pub answer_key: String,
}

/// What a client may see of a task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublicTask<'a> {
    pub task_id: &'a str,
    pub kind: TaskKind,
    pub options: Vec<&'a str>,
    pub payload: &'a TaskPayload,
}

impl TaskBundle {
    pub fn kind(&self) -> TaskKind {
        match self.payload {
            TaskPayload::EmbeddingId { .. } => TaskKind::EmbeddingId,
            TaskPayload::RankingPair { .. } => TaskKind::RankingPair,
        }
    }

    pub fn setting(&self) -> Option<PairSetting> {
        match &self.payload {
            TaskPayload::RankingPair { pair_setting, .. } => Some(*pair_setting),
            TaskPayload::EmbeddingId { .. } => None,
        }
    }

    /// Doc ids a choice may name.
    pub fn options(&self) -> Vec<&str> {
        match &self.payload {
            TaskPayload::EmbeddingId { candidates, .. } => candidates.iter().map(|c| c.doc_id.as_str()).collect(),
            TaskPayload::RankingPair { docs, .. } => docs.iter().map(|d| d.doc_id.as_str()).collect(),
        }
    }

    pub fn public(&self) -> PublicTask<'_> {
        PublicTask { task_id: &self.task_id, kind: self.kind(), options: self.options(), payload: &self.payload }
    }
}

pub fn write_bundles(bundles: &[TaskBundle], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(bundles).expect("bundle serialize");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_bundles(path: impl AsRef<Path>) -> Result<Vec<TaskBundle>> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
}

/// Everything needed to show a document's latents to a person.
pub struct TaskSources<'a> {
    pub corpus: &'a Corpus,
    pub doc_codes: &'a [SparseCode],
    pub stats: &'a ConceptStats,
    pub descriptions: &'a BTreeMap<u32, LatentDescription>,
}

impl TaskSources<'_> {
    fn check(&self) -> Result<()> {
        if self.corpus.len() != self.doc_codes.len() {
            return Err(Error::DimMismatch { expected: self.corpus.len(), actual: self.doc_codes.len() });
        }
        match self.corpus.passages.iter().zip(self.doc_codes).find(|(p, c)| p.id != c.origin_id) {
            Some((p, c)) => Err(Error::invalid(format!("corpus doc `{}` lines up with code `{}`", p.id, c.origin_id))),
            None => Ok(()),
        }
    }

    /// Idf-weighted latents of `code`, each with its description.
    pub fn shown(&self, code: &SparseCode, shared_with: Option<&SparseCode>) -> Result<Vec<ShownLatent>> {
        idf_weighted(code, self.stats)?
            .into_iter()
            .map(|(j, w)| {
                let d = self
                    .descriptions
                    .get(&j)
                    .ok_or_else(|| Error::Unknown { kind: "latent description", id: j.to_string() })?;
                Ok(ShownLatent {
                    latent_id: j,
                    weight: w,
                    description: d.text.clone(),
                    shared: shared_with.map(|o| o.get(j).is_some()),
                })
            })
            .collect()
    }
}

pub fn export_embedding_tasks(src: &TaskSources<'_>, n_tasks: usize, seed: u64) -> Result<Vec<TaskBundle>> {
    src.check()?;
    let n = src.corpus.len();
    if n < EMBEDDING_CANDIDATES {
        return Err(Error::invalid(format!("embedding tasks need ≥ {EMBEDDING_CANDIDATES} docs, corpus has {n}")));
    }
    if n_tasks > n {
        return Err(Error::invalid(format!("{n_tasks} tasks requested but only {n} distinct targets")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = index::sample(&mut rng, n, n_tasks).into_vec();
    let mut out = Vec::with_capacity(n_tasks);
    for (t, &target) in targets.iter().enumerate() {
        let mut picks: Vec<usize> = index::sample(&mut rng, n - 1, EMBEDDING_CANDIDATES - 1)
            .into_iter()
            .map(|i| if i >= target { i + 1 } else { i })
            .collect();
        picks.push(target);
        picks.shuffle(&mut rng);
        let candidates = picks
            .iter()
            .map(|&i| Candidate { doc_id: src.corpus.passages[i].id.clone(), text: src.corpus.passages[i].text.clone() })
            .collect();
        out.push(TaskBundle {
            task_id: format!("emb-{t:04}"),
            payload: TaskPayload::EmbeddingId { latents: src.shown(&src.doc_codes[target], None)?, candidates },
            answer_key: src.corpus.passages[target].id.clone(),
        });
    }
    Ok(out)
}

/// One query's documents split by retrieval and relevance, in rank order.
#[derive(Debug, Clone, Default)]
struct QueryGroups<'a> {
    rp: Vec<&'a str>,
    rn: Vec<&'a str>,
    nrp: Vec<&'a str>,
}

impl QueryGroups<'_> {
    fn count(&self, s: PairSetting) -> u64 {
        let (rp, rn, nrp) = (self.rp.len() as u64, self.rn.len() as u64, self.nrp.len() as u64);
        match s {
            PairSetting::RpRp => rp * rp.saturating_sub(1) / 2,
            PairSetting::RpNrp => rp * nrp,
            PairSetting::RnNrp => rn * nrp,
        }
    }

    /// The `idx`-th eligible pair; first element is ranked higher.
    fn pair(&self, s: PairSetting, mut idx: u64) -> (&str, &str) {
        match s {
            PairSetting::RpRp => {
                let r = self.rp.len() as u64;
                let mut i = 0;
                while idx >= r - 1 - i {
                    idx -= r - 1 - i;
                    i += 1;
                }
                (self.rp[i as usize], self.rp[(i + 1 + idx) as usize])
            }
            PairSetting::RpNrp => {
                let w = self.nrp.len() as u64;
                (self.rp[(idx / w) as usize], self.nrp[(idx % w) as usize])
            }
            PairSetting::RnNrp => {
                let w = self.nrp.len() as u64;
                (self.rn[(idx / w) as usize], self.nrp[(idx % w) as usize])
            }
        }
    }
}

fn check_depth(list: &RankedList, n_docs: usize, cutoff: usize) -> Result<()> {
    if list.len() < cutoff.min(n_docs) {
        return Err(Error::invalid(format!(
            "run for `{}` has depth {} below the retrieved cutoff {}",
            list.query_id,
            list.len(),
            cutoff.min(n_docs)
        )));
    }
    Ok(())
}

fn group<'a>(list: &'a RankedList, qrels: &Qrels, cutoff: usize) -> QueryGroups<'a> {
    let pos: HashSet<&str> = qrels.positives(&list.query_id).collect();
    let mut g = QueryGroups::default();
    for (rank, (doc, _)) in list.entries.iter().enumerate() {
        let retrieved = rank < cutoff;
        match (retrieved, pos.contains(doc.as_str())) {
            (true, true) => g.rp.push(doc),
            (true, false) => g.rn.push(doc),
            (false, true) => g.nrp.push(doc),
            (false, false) => {}
        }
    }
    g
}

/// Eligible pair counts per setting over a run. Positives absent from the
/// run have no model score and take part in no pair.
pub fn eligible_pairs(run: &[RankedList], qrels: &Qrels, n_docs: usize, cutoff: usize) -> Result<BTreeMap<PairSetting, u64>> {
    let mut out: BTreeMap<PairSetting, u64> = PairSetting::ALL.iter().map(|&s| (s, 0)).collect();
    for list in run {
        check_depth(list, n_docs, cutoff)?;
        let g = group(list, qrels, cutoff);
        for s in PairSetting::ALL {
            *out.get_mut(&s).unwrap() += g.count(s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingAvailability {
    pub setting: PairSetting,
    pub eligible: u64,
    pub requested: usize,
    pub produced: usize,
    pub available: bool,
}

#[derive(Debug, Clone)]
pub struct RankingExport {
    pub cutoff: usize,
    pub tasks: Vec<TaskBundle>,
    pub availability: Vec<SettingAvailability>,
}

/// Samples pairs per setting from a full-depth `run` of the model being
/// explained. A setting with no eligible pair is reported, not filled.
#[allow(clippy::too_many_arguments)]
pub fn export_ranking_tasks(
    src: &TaskSources<'_>,
    queries: &QuerySet,
    query_codes: &[SparseCode],
    run: &[RankedList],
    qrels: &Qrels,
    counts: &BTreeMap<PairSetting, usize>,
    cutoff: usize,
    seed: u64,
) -> Result<RankingExport> {
    src.check()?;
    let n_docs = src.corpus.len();
    let doc_pos: HashMap<&str, usize> = src.corpus.passages.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let q_text: HashMap<&str, &str> = queries.passages.iter().map(|p| (p.id.as_str(), p.text.as_str())).collect();
    let q_code: HashMap<&str, &SparseCode> = query_codes.iter().map(|c| (c.origin_id.as_str(), c)).collect();
    let mut groups = Vec::with_capacity(run.len());
    for list in run {
        check_depth(list, n_docs, cutoff)?;
        groups.push((list, group(list, qrels, cutoff)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    let mut availability = Vec::new();
    for setting in PairSetting::ALL {
        let requested = counts.get(&setting).copied().unwrap_or(0);
        let per_query: Vec<u64> = groups.iter().map(|(_, g)| g.count(setting)).collect();
        let eligible: u64 = per_query.iter().sum();
        let take = (requested as u64).min(eligible) as usize;
        let picks: Vec<u64> = if take == 0 {
            Vec::new()
        } else if eligible <= usize::MAX as u64 {
            index::sample(&mut rng, eligible as usize, take).into_iter().map(|i| i as u64).collect()
        } else {
            return Err(Error::invalid("too many eligible pairs to sample"));
        };
        for (t, mut idx) in picks.into_iter().enumerate() {
            let mut qi = 0;
            while idx >= per_query[qi] {
                idx -= per_query[qi];
                qi += 1;
            }
            let (list, g) = &groups[qi];
            let (hi, lo) = g.pair(setting, idx);
            let qid = list.query_id.as_str();
            let qcode = *q_code.get(qid).ok_or_else(|| Error::Unknown { kind: "query code", id: qid.to_string() })?;
            let text = *q_text.get(qid).ok_or_else(|| Error::Unknown { kind: "query", id: qid.to_string() })?;
            let mut pair = [hi, lo];
            if rng.random_bool(0.5) {
                pair.swap(0, 1);
            }
            let docs = pair.map(|d| -> Result<PairDoc> {
                let i = *doc_pos.get(d).ok_or_else(|| Error::Unknown { kind: "doc", id: d.to_string() })?;
                Ok(PairDoc {
                    doc_id: d.to_string(),
                    text: src.corpus.passages[i].text.clone(),
                    latents: src.shown(&src.doc_codes[i], Some(qcode))?,
                })
            });
            let [a, b] = docs;
            tasks.push(TaskBundle {
                task_id: format!("rank-{}-{t:04}", setting.as_str().to_ascii_lowercase()),
                payload: TaskPayload::RankingPair {
                    pair_setting: setting,
                    cutoff,
                    query_id: qid.to_string(),
                    query_text: text.to_string(),
                    query_latents: src.shown(qcode, None)?,
                    docs: [a?, b?],
                },
                answer_key: hi.to_string(),
            });
        }
        availability.push(SettingAvailability { setting, eligible, requested, produced: take, available: eligible > 0 });
    }
    Ok(RankingExport { cutoff, tasks, availability })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub task_id: String,
    pub annotator_id: String,
    pub choice: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub correct: bool,
}

/// Checks `choice` against the task's options and grades it.
pub fn grade_answer(bundle: &TaskBundle, annotator_id: &str, choice: &str, timestamp: u64) -> Result<Annotation> {
    if annotator_id.trim().is_empty() {
        return Err(Error::invalid("empty annotator id"));
    }
    if !bundle.options().contains(&choice) {
        return Err(Error::invalid(format!("`{choice}` is not an option of task `{}`", bundle.task_id)));
    }
    Ok(Annotation {
        task_id: bundle.task_id.clone(),
        annotator_id: annotator_id.to_string(),
        choice: choice.to_string(),
        timestamp,
        correct: choice == bundle.answer_key,
    })
}

/// Append-only JSONL annotation log.
#[derive(Debug, Clone)]
pub struct AnnotationLog {
    path: PathBuf,
}

impl AnnotationLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        AnnotationLog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, a: &Annotation) -> Result<()> {
        let line = serde_json::to_string(a).expect("annotation serialize");
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{line}").and_then(|_| f.sync_data()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn read_all(&self) -> Result<Vec<Annotation>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub kind: TaskKind,
    pub setting: Option<PairSetting>,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Accuracy grouped by task kind and pair setting; groups with no
/// annotations are absent.
pub fn score_annotations(annotations: &[Annotation], bundles: &[TaskBundle]) -> Result<Vec<GroupAccuracy>> {
    let by_id: HashMap<&str, &TaskBundle> = bundles.iter().map(|b| (b.task_id.as_str(), b)).collect();
    let mut groups: BTreeMap<(TaskKind, Option<PairSetting>), (usize, usize)> = BTreeMap::new();
    for a in annotations {
        let b = by_id.get(a.task_id.as_str()).ok_or_else(|| Error::Unknown { kind: "task", id: a.task_id.clone() })?;
        let e = groups.entry((b.kind(), b.setting())).or_default();
        e.1 += 1;
        if a.choice == b.answer_key {
            e.0 += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|((kind, setting), (correct, total))| GroupAccuracy { kind, setting, correct, total, accuracy: correct as f64 / total as f64 })
        .collect())
}
