//! Experiment orchestration: synthetic corpora, the approach ×
//! architecture grid, low-confidence selection, explanations and reports.

pub mod config;
pub mod experiment;
pub mod report;
pub mod select;
pub mod synth;

pub use config::{Approach, CorpusSource, ExperimentConfig, ExplainSettings, FeatureConfig, ModelDims, TrainingConfigs};
pub use experiment::{
    evaluate_predictor, explain_predictor, featurizer_for, load_corpus, prepare, resolve_k, run_cells, run_experiment,
    run_on_corpus, Cell, ExperimentReport, PreparedData, Provenance, ReportRow, TestItem,
};
pub use report::{emit_report, load_report, to_csv, to_html, to_markdown, ReportFormat};
pub use select::{explain_instances, select_low_confidence, CellExplanations, Predictor, Selected, DEFAULT_SELECTED};
pub use synth::{synth_corpus, SynthSpec};
