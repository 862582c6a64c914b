//! Coverage-guided curation of retrieval corpora and QA benchmarks.
//!
//! Sets of embeddings are compared through Gaussian kernel density
//! estimates: regions where a reference set is dense and a candidate set is
//! thin are gaps, and a new batch whose density profile correlates with the
//! existing corpus is redundant.

pub mod compactness;
pub mod curator;
pub mod density;
pub mod encoder;
pub mod eval;
pub mod hooks;
pub mod qagen;
pub mod report;
pub mod store;

pub use compactness::{admit_batch, compactness_r, pearson_r, redundancy_report, AdmissionDecision};
pub use curator::{expand_corpus, qa_round, run_pipeline, CurationTrace, CuratorConfig, ItemEmbedder, QuestionSet};
pub use density::{kde_log_density, select_gap, DensityField, GapSet, KdeParams};
pub use eval::{bleu_n, evaluate, EvalReport};
pub use qagen::{Format, Level, QAItem};
pub use store::{Dataset, EmbeddingRecord, Role};
