use std::collections::{BTreeMap, HashMap, HashSet};

use latentir_core::concepts::{
    compute_stats, eligible_pairs, export_embedding_tasks, export_ranking_tasks, grade_answer, score_annotations, top_activating, DescribeJob,
    Describer, PairSetting, TaskPayload, TaskSources, TokenStats,
};
use latentir_core::ingest::{synth_generate, Qrels, SynthData, SynthSpec};
use latentir_core::recon_eval::dense_search;
use latentir_core::run::RankedList;
use latentir_core::sae::{encode_store, fit, SaeConfig, SparseCode};
use latentir_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    data: SynthData,
    doc_codes: Vec<SparseCode>,
    query_codes: Vec<SparseCode>,
    m: usize,
}

fn setup() -> Setup {
    let data = synth_generate(&SynthSpec { docs: 2000, queries: 20, ..SynthSpec::default() }).unwrap();
    let cfg = SaeConfig { epochs: 10, ..SaeConfig::desk(16, 64, 8) }.with_seed(4);
    let out = fit(Exec::default(), &data.doc_embeddings, &cfg).unwrap();
    let doc_codes = encode_store(Exec::default(), &out.params, out.theta, &data.doc_embeddings).unwrap();
    let query_codes = encode_store(Exec::default(), &out.params, out.theta, &data.query_embeddings).unwrap();
    Setup { data, doc_codes, query_codes, m: cfg.m }
}

fn offline_descriptions(s: &Setup) -> BTreeMap<u32, latentir_core::concepts::LatentDescription> {
    let tokens = TokenStats::from_corpus(&s.data.corpus);
    let text: HashMap<&str, &str> = s.data.corpus.passages.iter().map(|p| (p.id.as_str(), p.text.as_str())).collect();
    let jobs: Vec<DescribeJob> = (0..s.m as u32)
        .filter_map(|j| {
            let top = top_activating(&s.doc_codes, j, 30);
            (!top.is_empty()).then(|| DescribeJob { latent_id: j, examples: top.iter().map(|(d, a)| (text[d.as_str()].to_string(), *a)).collect() })
        })
        .collect();
    latentir_core::concepts::describe_all(&jobs, &Describer::Offline(&tokens), 4).into_iter().map(|(j, r)| (j, r.unwrap())).collect()
}

/// Every pair `(a, b)` with `a` ranked above `b`, classified directly.
fn brute_force_pairs(run: &[RankedList], qrels: &Qrels, cutoff: usize) -> BTreeMap<PairSetting, u64> {
    let mut out: BTreeMap<PairSetting, u64> = PairSetting::ALL.iter().map(|&s| (s, 0)).collect();
    for list in run {
        let pos: HashSet<&str> = qrels.positives(&list.query_id).collect();
        let class = |rank: usize, doc: &str| (rank < cutoff, pos.contains(doc));
        for (i, (a, _)) in list.entries.iter().enumerate() {
            for (j, (b, _)) in list.entries.iter().enumerate().skip(i + 1) {
                let setting = match (class(i, a), class(j, b)) {
                    ((true, true), (true, true)) => Some(PairSetting::RpRp),
                    ((true, true), (false, true)) => Some(PairSetting::RpNrp),
                    ((true, false), (false, true)) => Some(PairSetting::RnNrp),
                    _ => None,
                };
                if let Some(s) = setting {
                    *out.get_mut(&s).unwrap() += 1;
                }
            }
        }
    }
    out
}

/// Qrels with the synthetic gold plus a few random extra positives, so
/// every setting has pairs.
fn trec_style_qrels(s: &Setup, seed: u64) -> Qrels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = s.data.qrels.clone();
    for qid in s.data.queries.ids() {
        for _ in 0..rng.random_range(1..6) {
            let d = rng.random_range(0..s.data.corpus.len());
            q.insert(qid, s.data.corpus.passages[d].id.clone(), rng.random_range(1..3));
        }
        let d = rng.random_range(0..s.data.corpus.len());
        q.insert(qid, s.data.corpus.passages[d].id.clone(), 0);
    }
    q
}

#[test]
fn ranking_pairs_and_export() {
    let s = setup();
    let descs = offline_descriptions(&s);
    let stats = compute_stats(Exec::default(), &s.doc_codes, s.m, 30).unwrap();
    let n = s.data.corpus.len();
    let run = dense_search(Exec::default(), &s.data.doc_embeddings, &s.data.query_embeddings, n).unwrap();
    let qrels = trec_style_qrels(&s, 8);
    let cutoff = latentir_core::concepts::default_cutoff(n);
    assert_eq!(cutoff, 1000);

    let fast = eligible_pairs(&run, &qrels, n, cutoff).unwrap();
    assert_eq!(fast, brute_force_pairs(&run, &qrels, cutoff));
    assert!(fast.values().all(|&c| c > 0));

    let src = TaskSources { corpus: &s.data.corpus, doc_codes: &s.doc_codes, stats: &stats, descriptions: &descs };
    let counts: BTreeMap<PairSetting, usize> = PairSetting::ALL.iter().map(|&p| (p, 10)).collect();
    let export = export_ranking_tasks(&src, &s.data.queries, &s.query_codes, &run, &qrels, &counts, cutoff, 3).unwrap();
    assert_eq!(export.tasks.len(), 30);
    let by_q: HashMap<&str, &RankedList> = run.iter().map(|l| (l.query_id.as_str(), l)).collect();
    let qcodes: HashMap<&str, &SparseCode> = s.query_codes.iter().map(|c| (c.origin_id.as_str(), c)).collect();
    let dcodes: HashMap<&str, &SparseCode> = s.doc_codes.iter().map(|c| (c.origin_id.as_str(), c)).collect();
    for t in &export.tasks {
        let TaskPayload::RankingPair { query_id, docs, pair_setting, .. } = &t.payload else { panic!("wrong kind") };
        let list = by_q[query_id.as_str()];
        let ranks: Vec<usize> = docs.iter().map(|d| list.rank_of(&d.doc_id).unwrap()).collect();
        let better = if ranks[0] < ranks[1] { &docs[0] } else { &docs[1] };
        assert_eq!(t.answer_key, better.doc_id);
        let pos: HashSet<&str> = qrels.positives(query_id).collect();
        let classes: Vec<(bool, bool)> = docs.iter().zip(&ranks).map(|(d, &r)| (r <= cutoff, pos.contains(d.doc_id.as_str()))).collect();
        let mut sorted = classes.clone();
        sorted.sort();
        let expect = match pair_setting {
            PairSetting::RpRp => vec![(true, true), (true, true)],
            PairSetting::RpNrp => vec![(false, true), (true, true)],
            PairSetting::RnNrp => vec![(false, true), (true, false)],
        };
        assert_eq!(sorted, expect);
        for d in docs {
            for l in &d.latents {
                assert_eq!(l.shared, Some(qcodes[query_id.as_str()].get(l.latent_id).is_some()));
                assert!(dcodes[d.doc_id.as_str()].get(l.latent_id).is_some());
            }
            assert!(d.latents.windows(2).all(|w| w[0].weight >= w[1].weight));
        }
    }
    let again = export_ranking_tasks(&src, &s.data.queries, &s.query_codes, &run, &qrels, &counts, cutoff, 3).unwrap();
    assert_eq!(export.tasks, again.tasks);
}

#[test]
fn unavailable_setting_is_reported() {
    let s = setup();
    let descs = offline_descriptions(&s);
    let stats = compute_stats(Exec::default(), &s.doc_codes, s.m, 30).unwrap();
    let n = s.data.corpus.len();
    let run = dense_search(Exec::default(), &s.data.doc_embeddings, &s.data.query_embeddings, n).unwrap();
    // one gold per query, all retrieved: no RP/RP and no not-retrieved positives
    let src = TaskSources { corpus: &s.data.corpus, doc_codes: &s.doc_codes, stats: &stats, descriptions: &descs };
    let counts: BTreeMap<PairSetting, usize> = PairSetting::ALL.iter().map(|&p| (p, 5)).collect();
    let export = export_ranking_tasks(&src, &s.data.queries, &s.query_codes, &run, &s.data.qrels, &counts, 1000, 1).unwrap();
    for a in &export.availability {
        assert!(!a.available, "{:?}", a);
        assert_eq!(a.produced, 0);
    }
    assert!(export.tasks.is_empty());
}

#[test]
fn embedding_tasks_never_repeat_a_target() {
    let s = setup();
    let descs = offline_descriptions(&s);
    let stats = compute_stats(Exec::default(), &s.doc_codes, s.m, 30).unwrap();
    let src = TaskSources { corpus: &s.data.corpus, doc_codes: &s.doc_codes, stats: &stats, descriptions: &descs };
    let tasks = export_embedding_tasks(&src, 600, 12).unwrap();
    let targets: HashSet<&str> = tasks.iter().map(|t| t.answer_key.as_str()).collect();
    assert_eq!(targets.len(), 600);
    for t in &tasks {
        let TaskPayload::EmbeddingId { latents, candidates } = &t.payload else { panic!("wrong kind") };
        assert_eq!(candidates.len(), 10);
        assert_eq!(candidates.iter().filter(|c| c.doc_id == t.answer_key).count(), 1);
        let code = s.doc_codes.iter().find(|c| c.origin_id == t.answer_key).unwrap();
        assert_eq!(latents.len(), code.len());
    }
    let graded: Vec<_> = tasks.iter().map(|t| grade_answer(t, "a", &t.answer_key, 1).unwrap()).collect();
    let report = score_annotations(&graded, &tasks).unwrap();
    assert_eq!(report.len(), 1);
    assert_eq!(report[0].accuracy, 1.0);
}
