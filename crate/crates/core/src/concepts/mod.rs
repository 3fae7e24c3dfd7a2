//! Making latents readable: frequency statistics, idf-weighted displays,
//! natural-language descriptions, the intrusion test, and the two human
//! interpretability tasks.

mod describe;
mod intrusion;
mod llm;
mod stats;
mod tasks;

pub use describe::{
    describe_all, descriptions_to_jsonl, distinguishing_tokens, generate_description, read_descriptions, write_descriptions, DescribeJob,
    Describer, DescriptionSource, LatentDescription, TokenStats, DEFAULT_CONCURRENCY, OFFLINE_TOKENS,
};
pub use intrusion::{
    intrusion_test, neuron_codes, offline_pick, Basis, IntrusionConfig, IntrusionReport, IntrusionTrial, Judge, SkippedLatent, ACTIVATING, CANDIDATES,
};
#[cfg(feature = "http-llm")]
pub use llm::HttpClient;
pub use llm::{
    parse_interpretation, parse_intruder, render_description, render_intrusion, Exchange, LlmClient, RecordingClient, ReplayClient, API_KEY_ENV,
    DESCRIPTION_TEMPLATE, INTERPRETATION_MARKER, INTRUDER_MARKER, INTRUSION_TEMPLATE,
};
pub use stats::{compute_stats, idf_weighted, top_activating, ConceptStats, LatentStats};
pub use tasks::{
    default_cutoff, eligible_pairs, export_embedding_tasks, export_ranking_tasks, grade_answer, read_bundles, score_annotations, write_bundles, Annotation,
    AnnotationLog, Candidate, GroupAccuracy, PairDoc, PairSetting, PublicTask, RankingExport, SettingAvailability, ShownLatent, TaskBundle, TaskKind,
    TaskPayload, TaskSources, EMBEDDING_CANDIDATES, FULL_SCALE_CUTOFF,
};
