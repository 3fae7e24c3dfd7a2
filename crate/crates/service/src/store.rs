use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use latentir_core::clsr::{ConceptIndex, ScoringParams};
use latentir_core::concepts::{
    grade_answer, read_bundles, read_descriptions, score_annotations, Annotation, AnnotationLog, GroupAccuracy, LatentDescription, TaskBundle,
    TaskKind,
};
use latentir_core::ingest::{read_corpus, read_embeddings, Corpus, CorpusFormat, QuerySet, TopicTable};
use latentir_core::sae::{encode_infer, encode_store, SaeModel, SparseCode};
use latentir_core::workdir::Workdir;
use latentir_core::{Error, Exec, Result};

/// How a free-text search string was turned into a latent code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// The string is the id of a pre-embedded query.
    QueryId,
    /// The string names synthetic topics by their surface forms.
    TopicText,
}

struct Annotations {
    log: AnnotationLog,
    all: Vec<Annotation>,
    answered: HashSet<(String, String)>,
}

/// Everything the API reads, loaded once at startup. Annotations are the only
/// mutable state and go through one lock, so the log has a single writer.
pub struct SessionStore {
    pub corpus: Corpus,
    doc_pos: HashMap<String, u32>,
    pub queries: QuerySet,
    query_codes: HashMap<String, SparseCode>,
    pub index: ConceptIndex,
    pub scoring: ScoringParams,
    model: SaeModel,
    topics: Option<TopicTable>,
    descriptions: BTreeMap<u32, LatentDescription>,
    bundles: Vec<TaskBundle>,
    bundle_pos: HashMap<String, usize>,
    annotations: Mutex<Annotations>,
}

fn missing(path: &std::path::Path, producer: &str) -> Error {
    Error::invalid(format!("{} not found; run `latentir {producer}` first", path.display()))
}

impl SessionStore {
    /// Loads a workdir that has at least been through `index-build`.
    /// Descriptions, topics and tasks are optional.
    pub fn load(wd: &Workdir, scoring: ScoringParams) -> Result<Self> {
        for (path, producer) in [
            (wd.corpus(), "synth"),
            (wd.queries(), "synth"),
            (wd.query_embeddings(), "synth"),
            (wd.sae(), "sae-train"),
            (wd.index(), "index-build"),
        ] {
            if !path.exists() {
                return Err(missing(&path, producer));
            }
        }
        let corpus = read_corpus(wd.corpus(), CorpusFormat::Tsv)?;
        let queries = read_corpus(wd.queries(), CorpusFormat::Tsv)?;
        let model = SaeModel::read(wd.sae())?;
        let index = ConceptIndex::read(wd.index())?;
        let q_emb = read_embeddings(wd.query_embeddings())?;
        let query_codes = encode_store(Exec::default(), &model.params, model.theta, &q_emb)?;
        let topics = if wd.topics().exists() {
            let text = std::fs::read_to_string(wd.topics()).map_err(|e| Error::io(wd.topics(), e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", wd.topics().display())))?)
        } else {
            None
        };
        let descriptions = if wd.descriptions().exists() { read_descriptions(wd.descriptions())? } else { BTreeMap::new() };
        let bundles = if wd.tasks().exists() { read_bundles(wd.tasks())? } else { Vec::new() };
        let log = AnnotationLog::new(wd.annotations());
        Self::from_parts(corpus, queries, query_codes, index, scoring, model, topics, descriptions, bundles, log)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        corpus: Corpus,
        queries: QuerySet,
        query_codes: Vec<SparseCode>,
        index: ConceptIndex,
        scoring: ScoringParams,
        model: SaeModel,
        topics: Option<TopicTable>,
        descriptions: BTreeMap<u32, LatentDescription>,
        bundles: Vec<TaskBundle>,
        log: AnnotationLog,
    ) -> Result<Self> {
        scoring.validate()?;
        if corpus.passages.iter().map(|p| p.id.as_str()).ne(index.doc_ids.iter().map(String::as_str)) {
            return Err(Error::invalid("corpus and concept index list different documents"));
        }
        if model.params.m != index.m {
            return Err(Error::DimMismatch { expected: index.m, actual: model.params.m });
        }
        let all = log.read_all()?;
        score_annotations(&all, &bundles)?;
        let answered = all.iter().map(|a| (a.annotator_id.clone(), a.task_id.clone())).collect();
        Ok(SessionStore {
            doc_pos: corpus.passages.iter().enumerate().map(|(i, p)| (p.id.clone(), i as u32)).collect(),
            corpus,
            queries,
            query_codes: query_codes.into_iter().map(|c| (c.origin_id.clone(), c)).collect(),
            index,
            scoring,
            model,
            topics,
            descriptions,
            bundle_pos: bundles.iter().enumerate().map(|(i, b)| (b.task_id.clone(), i)).collect(),
            bundles,
            annotations: Mutex::new(Annotations { log, all, answered }),
        })
    }

    pub fn description(&self, latent: u32) -> Option<&str> {
        self.descriptions.get(&latent).map(|d| d.text.as_str())
    }

    pub fn doc_position(&self, doc_id: &str) -> Option<u32> {
        self.doc_pos.get(doc_id).copied()
    }

    pub fn query_text(&self, query_id: &str) -> Option<&str> {
        self.queries.passages.iter().find(|p| p.id == query_id).map(|p| p.text.as_str())
    }

    /// Query ids win over topic text. `None` when neither applies.
    pub fn resolve_query(&self, q: &str) -> Result<Option<(QueryMode, SparseCode)>> {
        if let Some(code) = self.query_codes.get(q) {
            return Ok(Some((QueryMode::QueryId, code.clone())));
        }
        let Some(topics) = &self.topics else { return Ok(None) };
        let lookup = topics.token_index();
        let mut ids: Vec<usize> = latentir_core::lexical::tokenize(q).iter().filter_map(|t| lookup.get(t.as_str()).copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        let Some(h) = topics.embed_topics(&ids) else { return Ok(None) };
        let h: Vec<f64> = h.into_iter().map(f64::from).collect();
        let code = encode_infer(&self.model.params, &h, self.model.theta, q)?;
        Ok(Some((QueryMode::TopicText, code)))
    }

    pub fn bundle(&self, task_id: &str) -> Option<&TaskBundle> {
        self.bundle_pos.get(task_id).map(|&i| &self.bundles[i])
    }

    /// First task in file order this annotator has not answered, and how
    /// many remain including it.
    pub fn next_task(&self, kind: Option<TaskKind>, annotator: &str) -> (Option<&TaskBundle>, usize) {
        let state = self.annotations.lock().expect("annotation lock");
        let mut open = self
            .bundles
            .iter()
            .filter(|b| kind.is_none_or(|k| b.kind() == k))
            .filter(|b| !state.answered.contains(&(annotator.to_string(), b.task_id.clone())));
        let first = open.next();
        let remaining = first.map_or(0, |_| 1 + open.count());
        (first, remaining)
    }

    /// Grades and appends one answer. `Unknown` for a missing task,
    /// `Conflict` for a second answer by the same annotator, `Invalid` for a
    /// choice outside the options.
    pub fn record_answer(&self, task_id: &str, annotator: &str, choice: &str) -> Result<Annotation> {
        let bundle = self.bundle(task_id).ok_or_else(|| Error::Unknown { kind: "task", id: task_id.to_string() })?;
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
        let mut state = self.annotations.lock().expect("annotation lock");
        let key = (annotator.to_string(), task_id.to_string());
        if state.answered.contains(&key) {
            return Err(Error::Conflict(format!("annotator `{annotator}` already answered task `{task_id}`")));
        }
        let a = grade_answer(bundle, annotator, choice, ts)?;
        state.log.append(&a)?;
        state.all.push(a.clone());
        state.answered.insert(key);
        Ok(a)
    }

    pub fn accuracy(&self) -> Result<(usize, Vec<GroupAccuracy>)> {
        let state = self.annotations.lock().expect("annotation lock");
        Ok((state.all.len(), score_annotations(&state.all, &self.bundles)?))
    }

    pub fn task_count(&self) -> usize {
        self.bundles.len()
    }
}
