//! Metrics, dataset loading, configuration, and the batch pipeline.

mod config;
mod dataset;
mod metrics;
mod pipeline;
mod report;

use thiserror::Error;

pub use config::PipelineConfig;
pub use dataset::{load_data_dir, load_dataset, load_graph_dir, Example};
pub use metrics::{score_answers, score_forms, AnswerScore, Metrics};
pub use pipeline::{
    adapter_examples, answer_question, gold_aspects, relation_examples, run_pipeline, train_models, Models,
    PipelineRun, Trace, TrainingReport,
};
pub use report::{gate_csv, gate_rows, recall_csv, recall_curve, GateRow, RecallRow, ASPECTS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Io(String),
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error(transparent)]
    Gating(#[from] crate::gating::GatingError),
    #[error(transparent)]
    Graph(#[from] crate::kg::KgError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
