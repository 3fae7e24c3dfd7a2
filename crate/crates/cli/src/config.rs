//! Run configuration: a TOML file plus `--set section.key=value` overrides.
//! The digest of the resolved config is stamped into every artifact.

use std::path::{Path, PathBuf};

use latentir_core::clsr::ScoringParams;
use latentir_core::ingest::SynthSpec;
use latentir_core::lexical::Bm25Params;
use latentir_core::sae::SaeConfig;
use latentir_core::{Digest, Exec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// `parallel` or `sequential`.
    pub exec: String,
    pub synth: SynthSection,
    pub sae: SaeSection,
    pub clsr: ClsrSection,
    pub bm25: Bm25Section,
    pub eval: EvalSection,
    pub concepts: ConceptsSection,
    pub intrusion: IntrusionSection,
    pub tasks: TasksSection,
    pub serve: ServeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_topics: usize,
    pub d: usize,
    pub docs: usize,
    pub queries: usize,
    pub topics_per_doc: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaeSection {
    pub m: usize,
    pub k: usize,
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dead_window: u64,
    /// 0 means `2k`.
    pub aux_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClsrSection {
    /// `efficient`, `k48`, `k64`, `max` or `custom`.
    pub preset: String,
    pub k1: f64,
    pub b: f64,
    pub k2: f64,
    /// 0 means the preset's cap, or no cap when the preset has none.
    pub cap: usize,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub mismatch_cutoffs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConceptsSection {
    /// Passages kept per latent in the stats file and shown to describers.
    pub top_passages: usize,
    pub offline: bool,
    pub endpoint: String,
    pub model: String,
    /// JSONL of recorded exchanges; used instead of the endpoint when set.
    pub replay: String,
    pub concurrency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrusionSection {
    /// Latents sampled per basis.
    pub latents: usize,
    pub trials_per_latent: usize,
    /// `offline`, `random`, `oracle` or `llm`.
    pub judge: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TasksSection {
    pub embedding: usize,
    pub rp_rp: usize,
    pub rp_nrp: usize,
    pub rn_nrp: usize,
    /// 0 means `min(1000, |D|/2)`.
    pub cutoff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    pub ui_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            exec: "parallel".into(),
            synth: SynthSection::default(),
            sae: SaeSection::default(),
            clsr: ClsrSection::default(),
            bm25: Bm25Section::default(),
            eval: EvalSection::default(),
            concepts: ConceptsSection::default(),
            intrusion: IntrusionSection::default(),
            tasks: TasksSection::default(),
            serve: ServeSection::default(),
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthSpec::default();
        SynthSection {
            n_topics: s.n_topics,
            d: s.d,
            docs: s.docs,
            queries: s.queries,
            topics_per_doc: s.topics_per_doc,
            noise_sigma: s.noise_sigma,
        }
    }
}

impl Default for SaeSection {
    fn default() -> Self {
        let c = SaeConfig::desk(16, 64, 8);
        SaeSection {
            m: c.m,
            k: c.k,
            lambda: c.lambda,
            lr: c.lr,
            batch_size: c.batch_size,
            epochs: c.epochs,
            dead_window: c.dead_window,
            aux_width: 0,
        }
    }
}

impl Default for ClsrSection {
    fn default() -> Self {
        let p = ScoringParams::K64;
        ClsrSection { preset: "k64".into(), k1: p.k1, b: p.b, k2: p.k2, cap: 24, top_n: 1000 }
    }
}

impl Default for Bm25Section {
    fn default() -> Self {
        let p = Bm25Params::default();
        Bm25Section { k1: p.k1, b: p.b }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { mismatch_cutoffs: vec![10, 100, 1000] }
    }
}

impl Default for ConceptsSection {
    fn default() -> Self {
        ConceptsSection {
            top_passages: 20,
            offline: false,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            replay: String::new(),
            concurrency: latentir_core::concepts::DEFAULT_CONCURRENCY,
        }
    }
}

impl Default for IntrusionSection {
    fn default() -> Self {
        IntrusionSection { latents: 50, trials_per_latent: 4, judge: "offline".into() }
    }
}

impl Default for TasksSection {
    fn default() -> Self {
        TasksSection { embedding: 100, rp_rp: 50, rp_nrp: 50, rn_nrp: 50, cutoff: 0 }
    }
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection { host: "127.0.0.1".into(), port: 8080, ui_dir: String::new() }
    }
}

impl RunConfig {
    /// Reads `path` (defaults when `None`), then applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(value).try_into().map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn digest(&self) -> Digest {
        Digest::of(serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn exec(&self) -> Exec {
        if self.exec == "sequential" {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let s = &self.synth;
        SynthSpec {
            n_topics: s.n_topics,
            d: s.d,
            docs: s.docs,
            queries: s.queries,
            topics_per_doc: s.topics_per_doc,
            noise_sigma: s.noise_sigma,
            seed: self.seed,
        }
    }

    pub fn sae_config(&self, d: usize) -> SaeConfig {
        let s = &self.sae;
        SaeConfig {
            lambda: s.lambda,
            lr: s.lr,
            batch_size: s.batch_size,
            epochs: s.epochs,
            dead_window: s.dead_window,
            aux_width: if s.aux_width == 0 { 2 * s.k } else { s.aux_width },
            ..SaeConfig::new(d, s.m, s.k)
        }
        .with_seed(self.seed)
    }

    /// Scoring constants and per-doc cap; `None` means uncapped.
    pub fn scoring(&self) -> (ScoringParams, Option<usize>) {
        let c = &self.clsr;
        let (params, preset_cap) = match ScoringParams::preset(&c.preset) {
            Some(p) => p,
            None => (ScoringParams { k1: c.k1, b: c.b, k2: c.k2 }, None),
        };
        let cap = if c.cap > 0 { Some(c.cap) } else { preset_cap };
        (params, cap)
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params { k1: self.bm25.k1, b: self.bm25.b }
    }

    pub fn ui_dir(&self) -> Option<PathBuf> {
        (!self.serve.ui_dir.is_empty()).then(|| PathBuf::from(&self.serve.ui_dir))
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::usage(format!("config: {m}")));
        if self.exec != "parallel" && self.exec != "sequential" {
            return bad(format!("exec must be `parallel` or `sequential`, got `{}`", self.exec));
        }
        self.synth_spec().validate().map_err(|e| CliError::usage(format!("config: {e}")))?;
        self.sae_config(1).validate().map_err(|e| CliError::usage(format!("config: {e}")))?;
        if ScoringParams::preset(&self.clsr.preset).is_none() && self.clsr.preset != "custom" {
            return bad(format!("clsr.preset must be efficient, k48, k64, max or custom, got `{}`", self.clsr.preset));
        }
        self.scoring().0.validate().map_err(|e| CliError::usage(format!("config: {e}")))?;
        if self.clsr.top_n == 0 {
            return bad("clsr.top_n must be positive".into());
        }
        if self.bm25.k1.is_nan() || self.bm25.k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25.b) {
            return bad("bm25 needs k1 ≥ 0 and 0 ≤ b ≤ 1".into());
        }
        if self.eval.mismatch_cutoffs.is_empty() || self.eval.mismatch_cutoffs.contains(&0) {
            return bad("eval.mismatch_cutoffs must be non-empty and positive".into());
        }
        if !["offline", "random", "oracle", "llm"].contains(&self.intrusion.judge.as_str()) {
            return bad(format!("intrusion.judge must be offline, random, oracle or llm, got `{}`", self.intrusion.judge));
        }
        if self.concepts.top_passages == 0 || self.concepts.concurrency == 0 {
            return bad("concepts.top_passages and concepts.concurrency must be positive".into());
        }
        Ok(())
    }
}

/// `a.b.c=value`; the value is parsed as a TOML literal, falling back to a
/// bare string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--set expects key=value, got `{assignment}`")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::usage(format!("--set: bad key `{path}`")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::usage(format!("--set: `{k}` in `{path}` is not a section")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::load(None, &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_digest() {
        let cfg = RunConfig::load(None, &["sae.k=4".into(), "clsr.preset=efficient".into(), "seed=9".into()]).unwrap();
        assert_eq!(cfg.sae.k, 4);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scoring(), (ScoringParams::EFFICIENT, Some(24)));
        assert_ne!(cfg.digest(), RunConfig::default().digest());
        assert_eq!(cfg.digest(), RunConfig::load(None, &["seed=9".into(), "sae.k=4".into(), "clsr.preset=efficient".into()]).unwrap().digest());
    }

    #[test]
    fn bad_overrides_are_usage_errors() {
        for bad in ["sae.nope=1", "sae.k", "sae.k=four", "clsr.preset=fast", "exec=gpu", "seed.x=1"] {
            let e = RunConfig::load(None, &[bad.into()]).unwrap_err();
            assert_eq!(e.code, 2, "{bad}: {e:?}");
        }
    }

    #[test]
    fn custom_scoring_and_uncapped() {
        let cfg = RunConfig::load(None, &["clsr.preset=custom".into(), "clsr.k1=1.5".into(), "clsr.cap=0".into()]).unwrap();
        let (p, cap) = cfg.scoring();
        assert_eq!(p.k1, 1.5);
        assert_eq!(cap, None);
    }
}
