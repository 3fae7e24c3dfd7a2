use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use latentir_core::clsr::{flops_estimate, ConceptIndex};
use latentir_core::concepts::{
    compute_stats, default_cutoff, describe_all, export_embedding_tasks, export_ranking_tasks, intrusion_test, neuron_codes,
    read_descriptions, write_bundles, write_descriptions, Basis, ConceptStats, DescribeJob, Describer, IntrusionConfig, Judge, LlmClient,
    PairSetting, ReplayClient, TaskKind, TaskSources, TokenStats,
};
use latentir_core::ingest::{
    read_corpus, read_embeddings, read_qrels, synth_generate, write_corpus_tsv, write_embeddings, write_qrels, Corpus, CorpusFormat,
    EmbeddingStore, Qrels,
};
use latentir_core::lexical::{mismatch_set, TermIndex};
use latentir_core::metrics::mrr_at_k;
use latentir_core::recon_eval::{dense_search, recon_report};
use latentir_core::report::{eval_csv, EvalRow};
use latentir_core::run::{read_trec_run, write_trec_run, RankedList};
use latentir_core::sae::{encode_store, fit, write_loss_log, SaeModel, SparseCode};
use latentir_core::workdir::Workdir;
use latentir_core::Digest;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::workspace::{acquire, require, Manifest};
use crate::{Cli, CliError, Command};

type CmdResult = Result<(), CliError>;

struct Ctx {
    wd: Workdir,
    cfg: RunConfig,
    digest: Digest,
    json: bool,
}

pub fn run(cli: &Cli) -> CmdResult {
    let default_cfg = cli.workdir.join("latentir.toml");
    let cfg_path = cli.config.clone().or_else(|| default_cfg.exists().then_some(default_cfg));
    let cfg = RunConfig::load(cfg_path.as_deref(), &cli.overrides)?;
    let ctx = Ctx { wd: Workdir::new(&cli.workdir), digest: cfg.digest(), cfg, json: cli.json };
    if let Command::Config = cli.command {
        return config(&ctx);
    }
    fs::create_dir_all(&cli.workdir).map_err(|e| CliError::runtime(format!("{}: {e}", cli.workdir.display())))?;
    let _lock = acquire(&ctx.wd)?;
    let t = Instant::now();
    match &cli.command {
        Command::Config => unreachable!(),
        Command::Synth => synth(&ctx),
        Command::SaeTrain => sae_train(&ctx),
        Command::SaeEval => sae_eval(&ctx),
        Command::ConceptStats => concept_stats(&ctx),
        Command::Describe { offline } => describe(&ctx, *offline),
        Command::Intrude => intrude(&ctx),
        Command::IndexBuild => index_build(&ctx),
        Command::Search { query } => search(&ctx, query.as_deref()),
        Command::Bm25Index => bm25_index(&ctx),
        Command::Bm25Search => bm25_search(&ctx),
        Command::Eval => eval(&ctx),
        Command::Mismatch => mismatch(&ctx),
        Command::TasksExport => tasks_export(&ctx),
        Command::Serve => serve(&ctx),
    }?;
    eprintln!("info  done in {:.1}s (config {})", t.elapsed().as_secs_f64(), ctx.digest.short());
    Ok(())
}

impl Ctx {
    /// Prints `human` normally, or `summary` as JSON with `--json`.
    fn emit(&self, human: &str, summary: Value) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        } else {
            print!("{human}");
        }
    }

    fn record(&self, command: &str, outputs: &[PathBuf]) -> CmdResult {
        Manifest::record(&self.wd, command, self.digest, outputs)
    }

    fn write_json(&self, path: &PathBuf, mut value: Value) -> CmdResult {
        value["config_digest"] = json!(self.digest.to_hex());
        let text = serde_json::to_string_pretty(&value).expect("json serializes") + "\n";
        fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    }

    fn corpus(&self) -> Result<Corpus, CliError> {
        require(&self.wd.corpus(), "synth")?;
        Ok(read_corpus(self.wd.corpus(), CorpusFormat::Tsv)?)
    }

    fn queries(&self) -> Result<Corpus, CliError> {
        require(&self.wd.queries(), "synth")?;
        Ok(read_corpus(self.wd.queries(), CorpusFormat::Tsv)?)
    }

    fn qrels(&self) -> Result<Qrels, CliError> {
        require(&self.wd.qrels(), "synth")?;
        Ok(read_qrels(self.wd.qrels())?)
    }

    fn doc_embeddings(&self) -> Result<EmbeddingStore, CliError> {
        require(&self.wd.doc_embeddings(), "synth")?;
        Ok(read_embeddings(self.wd.doc_embeddings())?)
    }

    fn query_embeddings(&self) -> Result<EmbeddingStore, CliError> {
        require(&self.wd.query_embeddings(), "synth")?;
        Ok(read_embeddings(self.wd.query_embeddings())?)
    }

    fn model(&self) -> Result<SaeModel, CliError> {
        require(&self.wd.sae(), "sae-train")?;
        Ok(SaeModel::read(self.wd.sae())?)
    }

    fn index(&self) -> Result<ConceptIndex, CliError> {
        require(&self.wd.index(), "index-build")?;
        Ok(ConceptIndex::read(self.wd.index())?)
    }

    fn stats(&self) -> Result<ConceptStats, CliError> {
        require(&self.wd.concept_stats(), "concept-stats")?;
        Ok(ConceptStats::read(self.wd.concept_stats())?)
    }

    fn run_file(&self, path: PathBuf, producer: &str) -> Result<Vec<RankedList>, CliError> {
        require(&path, producer)?;
        Ok(read_trec_run(path)?)
    }

    fn encode(&self, model: &SaeModel, store: &EmbeddingStore) -> Result<Vec<SparseCode>, CliError> {
        Ok(encode_store(self.cfg.exec(), &model.params, model.theta, store)?)
    }

    /// The configured language model: a replay fixture when one is set,
    /// otherwise the HTTP endpoint (needs the `http-llm` feature).
    fn llm(&self) -> Result<Box<dyn LlmClient>, CliError> {
        let c = &self.cfg.concepts;
        if !c.replay.is_empty() {
            return Ok(Box::new(ReplayClient::from_jsonl(c.model.clone(), &c.replay)?));
        }
        #[cfg(feature = "http-llm")]
        {
            Ok(Box::new(latentir_core::concepts::HttpClient::new(c.endpoint.clone(), c.model.clone())?))
        }
        #[cfg(not(feature = "http-llm"))]
        Err(CliError::usage("no language model available: built without the `http-llm` feature; pass --offline or set concepts.replay"))
    }
}

fn kv(rows: &[(&str, String)]) -> String {
    rows.iter().map(|(k, v)| format!("{k:<22}{v}\n")).collect()
}

fn config(ctx: &Ctx) -> CmdResult {
    let human = format!("# config digest {}\n{}", ctx.digest, ctx.cfg.to_toml());
    ctx.emit(&human, json!({ "config_digest": ctx.digest.to_hex(), "config": ctx.cfg }));
    Ok(())
}

fn synth(ctx: &Ctx) -> CmdResult {
    let data = synth_generate(&ctx.cfg.synth_spec())?;
    let wd = &ctx.wd;
    write_corpus_tsv(&data.corpus, wd.corpus())?;
    write_corpus_tsv(&data.queries, wd.queries())?;
    write_qrels(&data.qrels, wd.qrels())?;
    write_embeddings(&data.doc_embeddings, wd.doc_embeddings())?;
    write_embeddings(&data.query_embeddings, wd.query_embeddings())?;
    let topics = serde_json::to_string(&data.topics).expect("topics serialize");
    fs::write(wd.topics(), topics).map_err(|e| CliError::runtime(format!("{}: {e}", wd.topics().display())))?;
    ctx.record("synth", &[wd.corpus(), wd.queries(), wd.qrels(), wd.doc_embeddings(), wd.query_embeddings(), wd.topics()])?;
    let s = data.spec;
    ctx.emit(
        &kv(&[
            ("documents", s.docs.to_string()),
            ("queries", s.queries.to_string()),
            ("dimension", s.d.to_string()),
            ("topics", s.n_topics.to_string()),
        ]),
        json!({ "documents": s.docs, "queries": s.queries, "dimension": s.d, "topics": s.n_topics }),
    );
    Ok(())
}

fn sae_train(ctx: &Ctx) -> CmdResult {
    let docs = ctx.doc_embeddings()?;
    let cfg = ctx.cfg.sae_config(docs.dim());
    cfg.validate().map_err(|e| CliError::usage(format!("config: {e}")))?;
    eprintln!("info  training m={} k={} on {} rows of dimension {}", cfg.m, cfg.k, docs.len(), cfg.d);
    let out = fit(ctx.cfg.exec(), &docs, &cfg)?;
    let dead = out.state.dead_mask(cfg.dead_window).iter().filter(|&&d| d).count();
    let last = out.state.loss_log.last().copied();
    let model = SaeModel { params: out.params, k: cfg.k, theta: out.theta, digest: ctx.digest };
    model.write(ctx.wd.sae())?;
    write_loss_log(&out.state.loss_log, ctx.wd.loss_log())?;
    ctx.record("sae-train", &[ctx.wd.sae(), ctx.wd.loss_log()])?;
    let recon = last.map_or(f64::NAN, |l| l.recon);
    ctx.emit(
        &kv(&[
            ("steps", out.state.step.to_string()),
            ("final recon loss", format!("{recon:.6}")),
            ("theta", format!("{:.6}", out.theta)),
            ("dead latents", format!("{dead} of {}", cfg.m)),
        ]),
        json!({ "steps": out.state.step, "final_recon_loss": recon, "theta": out.theta, "dead_latents": dead, "m": cfg.m, "k": cfg.k }),
    );
    Ok(())
}

fn sae_eval(ctx: &Ctx) -> CmdResult {
    let model = ctx.model()?;
    let (docs, queries, qrels) = (ctx.doc_embeddings()?, ctx.query_embeddings()?, ctx.qrels()?);
    let report = recon_report(ctx.cfg.exec(), &docs, &queries, &model.params, model.theta, &qrels)?;
    fs::write(ctx.wd.sae_eval(), report.to_csv()).map_err(|e| CliError::runtime(e.to_string()))?;
    ctx.record("sae-eval", &[ctx.wd.sae_eval()])?;
    ctx.emit(&report.to_table(), serde_json::to_value(&report).expect("report serializes"));
    Ok(())
}

fn concept_stats(ctx: &Ctx) -> CmdResult {
    let model = ctx.model()?;
    let codes = ctx.encode(&model, &ctx.doc_embeddings()?)?;
    let stats = compute_stats(ctx.cfg.exec(), &codes, model.params.m, ctx.cfg.concepts.top_passages)?;
    stats.write(ctx.wd.concept_stats())?;
    ctx.record("concept-stats", &[ctx.wd.concept_stats()])?;
    let alive = stats.alive().count();
    let mut dfs: Vec<usize> = stats.alive().map(|l| l.df).collect();
    dfs.sort_unstable();
    let median = dfs.get(dfs.len() / 2).copied().unwrap_or(0);
    let mean_l0 = codes.iter().map(SparseCode::len).sum::<usize>() as f64 / codes.len().max(1) as f64;
    ctx.emit(
        &kv(&[
            ("latents", stats.m().to_string()),
            ("alive", alive.to_string()),
            ("median df", median.to_string()),
            ("mean doc latents", format!("{mean_l0:.2}")),
        ]),
        json!({ "latents": stats.m(), "alive": alive, "median_df": median, "mean_doc_latents": mean_l0 }),
    );
    Ok(())
}

fn describe(ctx: &Ctx, offline: bool) -> CmdResult {
    let stats = ctx.stats()?;
    let corpus = ctx.corpus()?;
    let text: HashMap<&str, &str> = corpus.passages.iter().map(|p| (p.id.as_str(), p.text.as_str())).collect();
    let jobs: Vec<DescribeJob> = stats
        .alive()
        .map(|l| {
            let examples = l
                .top_passages
                .iter()
                .map(|(d, a)| text.get(d.as_str()).map(|t| (t.to_string(), *a)).ok_or_else(|| CliError::usage(format!("stats name unknown doc `{d}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(DescribeJob { latent_id: l.latent_id, examples })
        })
        .collect::<Result<_, CliError>>()?;
    let offline = offline || ctx.cfg.concepts.offline;
    let tokens;
    let client;
    let describer = if offline {
        tokens = TokenStats::from_corpus(&corpus);
        Describer::Offline(&tokens)
    } else {
        client = ctx.llm()?;
        Describer::Llm(client.as_ref())
    };
    let results = describe_all(&jobs, &describer, ctx.cfg.concepts.concurrency);
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (j, r) in results {
        match r {
            Ok(d) => ok.push(d),
            Err(e) => {
                eprintln!("warn  latent {j}: {e}");
                failed.push(j);
            }
        }
    }
    write_descriptions(&ok, ctx.wd.descriptions())?;
    ctx.record("describe", &[ctx.wd.descriptions()])?;
    let source = if offline { "offline" } else { "llm" };
    ctx.emit(
        &kv(&[("described", ok.len().to_string()), ("failed", failed.len().to_string()), ("source", source.into())]),
        json!({ "described": ok.len(), "failed": failed, "source": source }),
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::runtime(format!("{} latents could not be described", failed.len())))
    }
}

/// Seeded sample of up to `n` ids from `pool`, in ascending order.
fn sample_ids(pool: &[u32], n: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = sample(&mut rng, pool.len(), n.min(pool.len())).into_iter().map(|i| pool[i]).collect();
    ids.sort_unstable();
    ids
}

fn intrude(ctx: &Ctx) -> CmdResult {
    let model = ctx.model()?;
    let stats = ctx.stats()?;
    let corpus = ctx.corpus()?;
    let docs = ctx.doc_embeddings()?;
    let ic = &ctx.cfg.intrusion;
    let client;
    let judge = match ic.judge.as_str() {
        "oracle" => Judge::Oracle,
        "random" => Judge::Random { seed: ctx.cfg.seed },
        "llm" => {
            client = ctx.llm()?;
            Judge::Llm(client.as_ref())
        }
        _ => Judge::Offline,
    };
    let config = IntrusionConfig { trials_per_latent: ic.trials_per_latent, seed: ctx.cfg.seed };
    let sae_pool: Vec<u32> = stats.alive().map(|l| l.latent_id).collect();
    let sae_codes = ctx.encode(&model, &docs)?;
    let sae = intrusion_test(&corpus, &sae_codes, model.params.m, &sample_ids(&sae_pool, ic.latents, ctx.cfg.seed), Basis::Sae, &judge, config)?;
    let dims: Vec<u32> = (0..docs.dim() as u32).collect();
    let neuron_ids = sample_ids(&dims, ic.latents, ctx.cfg.seed);
    let neuron = intrusion_test(&corpus, &neuron_codes(&docs), docs.dim(), &neuron_ids, Basis::Neuron, &judge, config)?;
    ctx.write_json(&ctx.wd.intrusion(), json!({ "reports": [sae, neuron] }))?;
    ctx.record("intrude", &[ctx.wd.intrusion()])?;
    let line = |r: &latentir_core::concepts::IntrusionReport| format!("{:.3} ({} of {}, {} skipped)", r.accuracy, r.correct, r.total, r.skipped.len());
    let summary = |r: &latentir_core::concepts::IntrusionReport| {
        json!({ "accuracy": r.accuracy, "correct": r.correct, "total": r.total, "unparsed": r.unparsed, "skipped": r.skipped.len() })
    };
    ctx.emit(
        &kv(&[("judge", judge.name()), ("sae accuracy", line(&sae)), ("neuron accuracy", line(&neuron))]),
        json!({ "judge": judge.name(), "sae": summary(&sae), "neuron": summary(&neuron) }),
    );
    Ok(())
}

fn index_build(ctx: &Ctx) -> CmdResult {
    let model = ctx.model()?;
    let codes = ctx.encode(&model, &ctx.doc_embeddings()?)?;
    let m = model.params.m;
    let cap = ctx.cfg.scoring().1.unwrap_or(m).min(m);
    let index = ConceptIndex::build(ctx.cfg.exec(), &codes, m, cap)?.with_digest(ctx.digest);
    index.write(ctx.wd.index())?;
    ctx.record("index-build", &[ctx.wd.index()])?;
    let bytes = index.storage_bytes();
    ctx.emit(
        &kv(&[
            ("documents", index.n_docs().to_string()),
            ("cap", cap.to_string()),
            ("posting entries", index.posting_entries().to_string()),
            ("empty documents", index.empty_docs().to_string()),
            ("storage bytes", bytes.to_string()),
        ]),
        json!({
            "documents": index.n_docs(), "cap": cap, "posting_entries": index.posting_entries(),
            "empty_documents": index.empty_docs(), "storage_bytes": bytes,
        }),
    );
    Ok(())
}

fn clsr_tag(digest: Digest) -> String {
    format!("clsr-{}", digest.short())
}

fn search(ctx: &Ctx, query: Option<&str>) -> CmdResult {
    let index = ctx.index()?;
    let model = ctx.model()?;
    let codes = ctx.encode(&model, &ctx.query_embeddings()?)?;
    let (params, _) = ctx.cfg.scoring();
    let results = index.search_all(ctx.cfg.exec(), &codes, &params, ctx.cfg.clsr.top_n)?;
    let empty = results.iter().filter(|r| r.list.is_empty()).count();
    let run: Vec<RankedList> = results.into_iter().map(|r| r.list).collect();
    write_trec_run(&run, &clsr_tag(ctx.digest), ctx.wd.clsr_run())?;
    ctx.record("search", &[ctx.wd.clsr_run()])?;
    let mut human = kv(&[("queries", run.len().to_string()), ("empty results", empty.to_string())]);
    let mut summary = json!({ "queries": run.len(), "empty_results": empty });
    if let Some(q) = query {
        let list = run.iter().find(|l| l.query_id == q).ok_or_else(|| CliError::usage(format!("unknown query `{q}`")))?;
        let top: Vec<&(String, f64)> = list.entries.iter().take(10).collect();
        for (i, (d, s)) in top.iter().enumerate() {
            human += &format!("{:>3}  {d:<14}{s:.4}\n", i + 1);
        }
        summary["top"] = json!(top.iter().map(|(d, s)| json!({ "doc_id": d, "score": s })).collect::<Vec<_>>());
    }
    ctx.emit(&human, summary);
    Ok(())
}

fn bm25_index(ctx: &Ctx) -> CmdResult {
    let index = TermIndex::build(ctx.cfg.exec(), &ctx.corpus()?);
    index.write(ctx.wd.bm25_index())?;
    ctx.record("bm25-index", &[ctx.wd.bm25_index()])?;
    ctx.emit(
        &kv(&[("documents", index.n_docs().to_string()), ("terms", index.postings.len().to_string())]),
        json!({ "documents": index.n_docs(), "terms": index.postings.len() }),
    );
    Ok(())
}

fn bm25_search(ctx: &Ctx) -> CmdResult {
    require(&ctx.wd.bm25_index(), "bm25-index")?;
    let index = TermIndex::read(ctx.wd.bm25_index())?;
    let queries = ctx.queries()?;
    let run = index.search_all(ctx.cfg.exec(), &queries, ctx.cfg.clsr.top_n, ctx.cfg.bm25());
    let empty = run.iter().filter(|l| l.is_empty()).count();
    write_trec_run(&run, "bm25", ctx.wd.bm25_run())?;
    ctx.record("bm25-search", &[ctx.wd.bm25_run()])?;
    ctx.emit(
        &kv(&[("queries", run.len().to_string()), ("empty results", empty.to_string())]),
        json!({ "queries": run.len(), "empty_results": empty }),
    );
    Ok(())
}

fn dense_run(ctx: &Ctx) -> Result<(Vec<RankedList>, usize), CliError> {
    let docs = ctx.doc_embeddings()?;
    let run = dense_search(ctx.cfg.exec(), &docs, &ctx.query_embeddings()?, 1000.min(docs.len()))?;
    Ok((run, docs.len()))
}

fn eval_table(rows: &[EvalRow]) -> String {
    let mut out = format!("{:<10}{:>12}{:>16}{:>12}{:>12}{:>16}\n", "system", "mrr@10", "recall@1000", "ndcg@10", "flops", "storage_bytes");
    for r in rows {
        let flops = r.flops.map_or("-".into(), |f| format!("{f:.4}"));
        let bytes = r.storage_bytes.map_or("-".into(), |b| b.to_string());
        out += &format!("{:<10}{:>12.4}{:>16.4}{:>12.4}{flops:>12}{bytes:>16}\n", r.system, r.mrr_at_10, r.recall_at_1000, r.ndcg_at_10);
    }
    out
}

fn eval(ctx: &Ctx) -> CmdResult {
    let index = ctx.index()?;
    let clsr = ctx.run_file(ctx.wd.clsr_run(), "search")?;
    let qrels = ctx.qrels()?;
    let model = ctx.model()?;
    let query_codes = ctx.encode(&model, &ctx.query_embeddings()?)?;
    let (dense, n_docs) = dense_run(ctx)?;
    let mut rows = vec![EvalRow::new("dense", &dense, &qrels, n_docs)];
    if ctx.wd.bm25_run().exists() {
        rows.push(EvalRow::new("bm25", &read_trec_run(ctx.wd.bm25_run())?, &qrels, n_docs));
    } else {
        eprintln!("info  no {}; run `latentir bm25-search` to add the bm25 row", ctx.wd.bm25_run().display());
    }
    let flops = flops_estimate(&query_codes, &index)?;
    rows.push(EvalRow::new("clsr", &clsr, &qrels, n_docs).with_cost(flops, index.storage_bytes()));
    fs::write(ctx.wd.eval(), eval_csv(&rows)).map_err(|e| CliError::runtime(e.to_string()))?;
    ctx.record("eval", &[ctx.wd.eval()])?;
    ctx.emit(&eval_table(&rows), json!({ "rows": rows }));
    Ok(())
}

fn mismatch(ctx: &Ctx) -> CmdResult {
    let qrels = ctx.qrels()?;
    let bm25 = ctx.run_file(ctx.wd.bm25_run(), "bm25-search")?;
    let clsr = ctx.run_file(ctx.wd.clsr_run(), "search")?;
    let (dense, _) = dense_run(ctx)?;
    let mut rows = Vec::new();
    let mut human = format!("{:>8}{:>10}{:>10}{:>10}{:>10}\n", "cutoff", "queries", "bm25", "dense", "clsr");
    for &cutoff in &ctx.cfg.eval.mismatch_cutoffs {
        let set = mismatch_set(&bm25, &qrels, cutoff);
        let sub = qrels.restrict(&set.queries);
        let mrr = |run: &[RankedList]| -> Option<f64> {
            if set.queries.is_empty() {
                return None;
            }
            let kept: Vec<RankedList> = run.iter().filter(|l| set.queries.contains(&l.query_id)).cloned().collect();
            Some(mrr_at_k(&kept, &sub, 10).mean)
        };
        let (b, d, c) = (mrr(&bm25), mrr(&dense), mrr(&clsr));
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        human += &format!("{cutoff:>8}{:>10}{:>10}{:>10}{:>10}\n", set.queries.len(), cell(b), cell(d), cell(c));
        rows.push(json!({
            "cutoff": cutoff,
            "queries": set.queries.len(),
            "excluded_no_positive": set.excluded_no_positive,
            "mrr_at_10": { "bm25": b, "dense": d, "clsr": c },
        }));
    }
    ctx.write_json(&ctx.wd.mismatch(), json!({ "rows": rows }))?;
    ctx.record("mismatch", &[ctx.wd.mismatch()])?;
    ctx.emit(&human, json!({ "rows": rows }));
    Ok(())
}

fn tasks_export(ctx: &Ctx) -> CmdResult {
    let corpus = ctx.corpus()?;
    let queries = ctx.queries()?;
    let qrels = ctx.qrels()?;
    let model = ctx.model()?;
    let index = ctx.index()?;
    let stats = ctx.stats()?;
    require(&ctx.wd.descriptions(), "describe")?;
    let descriptions = read_descriptions(ctx.wd.descriptions())?;
    let doc_codes = ctx.encode(&model, &ctx.doc_embeddings()?)?;
    let query_codes = ctx.encode(&model, &ctx.query_embeddings()?)?;
    let (params, _) = ctx.cfg.scoring();

    // pairs need every doc ranked, so score exhaustively; zero-overlap docs tie at 0
    let run: Vec<RankedList> = ctx.cfg.exec().map_slice(&query_codes, |q| {
        let scored = (0..index.n_docs() as u32).map(|d| (d, index.score(q, d, &params))).collect();
        RankedList::from_positions(q.origin_id.clone(), scored, |d| index.doc_ids[d as usize].as_str(), usize::MAX)
    });
    let src = TaskSources { corpus: &corpus, doc_codes: &doc_codes, stats: &stats, descriptions: &descriptions };
    let tc = &ctx.cfg.tasks;
    let mut bundles = export_embedding_tasks(&src, tc.embedding, ctx.cfg.seed)?;
    let counts = BTreeMap::from([(PairSetting::RpRp, tc.rp_rp), (PairSetting::RpNrp, tc.rp_nrp), (PairSetting::RnNrp, tc.rn_nrp)]);
    let cutoff = if tc.cutoff > 0 { tc.cutoff } else { default_cutoff(corpus.len()) };
    let ranking = export_ranking_tasks(&src, &queries, &query_codes, &run, &qrels, &counts, cutoff, ctx.cfg.seed)?;
    bundles.extend(ranking.tasks);
    write_bundles(&bundles, ctx.wd.tasks())?;
    ctx.write_json(&ctx.wd.task_availability(), json!({ "cutoff": cutoff, "availability": ranking.availability }))?;
    ctx.record("tasks-export", &[ctx.wd.tasks(), ctx.wd.task_availability()])?;

    let embedding = bundles.iter().filter(|b| b.kind() == TaskKind::EmbeddingId).count();
    let mut human = kv(&[("embedding tasks", embedding.to_string()), ("pair cutoff", cutoff.to_string())]);
    for a in &ranking.availability {
        let note = if a.available { String::new() } else { "  (no eligible pair)".into() };
        human += &format!("{:<22}{} of {} requested, {} eligible{note}\n", a.setting.as_str(), a.produced, a.requested, a.eligible);
    }
    ctx.emit(&human, json!({ "embedding_tasks": embedding, "cutoff": cutoff, "availability": ranking.availability }));
    Ok(())
}

fn serve(ctx: &Ctx) -> CmdResult {
    let (params, _) = ctx.cfg.scoring();
    let store = latentir_service::SessionStore::load(&ctx.wd, params)?;
    let s = &ctx.cfg.serve;
    let addr: std::net::SocketAddr =
        format!("{}:{}", s.host, s.port).parse().map_err(|e| CliError::usage(format!("serve address {}:{}: {e}", s.host, s.port)))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime(e.to_string()))?;
    rt.block_on(latentir_service::serve(addr, store, ctx.cfg.ui_dir())).map_err(|e| CliError::runtime(format!("serve: {e}")))
}
