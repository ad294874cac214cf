//! The approach × architecture grid on one shared split.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{hard_dataset, soft_dataset, soft_label, LabelDistribution, SoftLabelMethod};
use crate::corpus::{self, AnnotationCorpus, SplitRatios, Splits};
use crate::error::{Error, Result};
use crate::explain::{default_k, TopK};
use crate::featurize::{build_vocab, FeatureMode, Featurizer, Vocabulary};
use crate::metrics::{evaluate, EvalResult};
use crate::model::{Arch, ClassifierModel, ModelSpec};
use crate::seeding;
use crate::train::{self, LossKind, SkippedAnnotator, TrainConfig};

use super::config::{Approach, CorpusSource, ExperimentConfig};
use super::select::{explain_instances, select_low_confidence, CellExplanations, Predictor};
use super::synth::synth_corpus;

pub fn load_corpus(source: &CorpusSource) -> Result<AnnotationCorpus> {
    match source {
        CorpusSource::File { path, format, classes } => corpus::ingest(path, *format, *classes),
        CorpusSource::Synth(spec) => synth_corpus(spec),
    }
}

/// One evaluated test instance: gold labels are strict-majority labels and
/// gold distributions are the corpus soft labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TestItem {
    pub id: String,
    pub text: String,
    pub gold_label: usize,
    pub gold_dist: LabelDistribution,
}

/// Everything shared by the grid cells.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub splits: Splits,
    pub test: Vec<TestItem>,
    pub test_ties_dropped: usize,
    pub vocab: Vocabulary,
}

impl PreparedData {
    pub fn test_ids_hash(&self) -> String {
        let joined = self.test.iter().map(|t| t.id.as_str()).collect::<Vec<_>>().join("\n");
        seeding::sha256_hex(joined.as_bytes())
    }
}

pub fn split_seed(root: u64) -> u64 {
    seeding::derive_seed(root, &["split"])
}

pub fn prepare(config: &ExperimentConfig, corpus: &AnnotationCorpus) -> Result<PreparedData> {
    let splits = corpus::split(corpus, config.split, split_seed(config.seed))?;
    let k = corpus.class_count();
    let mut test = Vec::new();
    let mut ties = 0;
    for inst in splits.test.instances() {
        let votes = inst.votes();
        match crate::aggregate::majority_label(&votes, k)? {
            Some(gold_label) => test.push(TestItem {
                id: inst.id.clone(),
                text: inst.text.clone(),
                gold_label,
                gold_dist: soft_label(&votes, k, config.soft_method)?,
            }),
            None => ties += 1,
        }
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("test split has no strict-majority instance".into()));
    }
    let texts: Vec<&str> = splits.train.instances().iter().map(|i| i.text.as_str()).collect();
    let vocab = build_vocab(&texts, config.features.min_df, config.features.max_vocab)?;
    Ok(PreparedData {
        splits,
        test,
        test_ties_dropped: ties,
        vocab,
    })
}

pub fn featurizer_for(config: &ExperimentConfig, vocab: &Vocabulary, arch: Arch) -> Featurizer {
    let mode = if arch.takes_sequences() {
        FeatureMode::Sequence
    } else {
        config.features.vector_mode
    };
    Featurizer {
        max_len: config.features.max_len,
        ..Featurizer::new(vocab.clone(), mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSeeds {
    pub model: u64,
    pub train: u64,
}

pub fn cell_seeds(root: u64, approach: Approach, arch: Arch) -> CellSeeds {
    let (a, r) = (approach.to_string(), arch.to_string());
    CellSeeds {
        model: seeding::derive_seed(root, &["model", &a, &r]),
        train: seeding::derive_seed(root, &["train", &a, &r]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: Approach,
    pub arch: Arch,
    pub eval: EvalResult,
    pub train_examples: usize,
    /// Training targets: `majority`, `annotator`, or `soft:<method>`.
    pub target_source: String,
    pub test_ids_hash: String,
    pub best_epochs: BTreeMap<String, usize>,
    pub skipped_annotators: Vec<SkippedAnnotator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub root_seed: u64,
    pub split_seed: u64,
    pub cell_seeds: BTreeMap<String, CellSeeds>,
    pub soft_label_method: SoftLabelMethod,
    pub tie_policy: String,
    pub split: SplitRatios,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub test_ties_dropped: usize,
    pub test_ids_hash: String,
    pub vocab_size: usize,
    pub gold_labels: String,
    pub gold_distributions: String,
    pub conventions: BTreeMap<String, String>,
    /// Wall-clock bounds; excluded from [`ExperimentReport::content_hash`].
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub provenance: Provenance,
    pub explanations: Vec<CellExplanations>,
}

impl ExperimentReport {
    pub fn row(&self, approach: Approach, arch: Arch) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.approach == approach && r.arch == arch)
    }

    /// SHA-256 over everything except wall-clock timestamps.
    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.provenance.started_unix = 0;
        copy.provenance.finished_unix = 0;
        seeding::sha256_hex(&serde_json::to_vec(&copy).expect("report serializes"))
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A trained grid cell.
pub struct Cell {
    pub approach: Approach,
    pub arch: Arch,
    pub featurizer: Featurizer,
    pub predictor: Predictor,
    pub row: ReportRow,
}

fn model_spec(config: &ExperimentConfig, arch: Arch, vocab: &Vocabulary, classes: usize, seed: u64) -> ModelSpec {
    ModelSpec {
        arch,
        input_dim: vocab.len(),
        hidden_dim: match arch {
            Arch::Linear => 1,
            Arch::Mlp => config.model.mlp_hidden,
            Arch::AttnPool => config.model.embedding,
        },
        class_count: classes,
        seed,
    }
}

pub fn run_cell(config: &ExperimentConfig, data: &PreparedData, approach: Approach, arch: Arch) -> Result<Cell> {
    let classes = data.splits.train.class_count();
    let featurizer = featurizer_for(config, &data.vocab, arch);
    let seeds = cell_seeds(config.seed, approach, arch);
    let spec = model_spec(config, arch, &data.vocab, classes, seeds.model);
    let base = TrainConfig {
        seed: seeds.train,
        ..*config.training.for_approach(approach)
    };
    let mut best_epochs = BTreeMap::new();
    let mut skipped_annotators = Vec::new();

    let (predictor, train_examples, target_source) = match approach {
        Approach::Majority => {
            let tr = train::examples_from_hard(&hard_dataset(&data.splits.train)?, &featurizer)?;
            let dev = train::examples_from_hard(&hard_dataset(&data.splits.dev)?, &featurizer)?;
            let cfg = TrainConfig { loss: LossKind::HardCe, ..base };
            let t = train::train(&tr, &dev, spec, &cfg)?;
            best_epochs.insert("model".to_string(), t.log.best_epoch);
            (Predictor::Single(t.model), tr.len(), "majority".to_string())
        }
        Approach::Multip => {
            let method = config.soft_method;
            let tr = train::examples_from_soft(&soft_dataset(&data.splits.train, method, config.keep_ties)?, &featurizer)?;
            let dev = train::examples_from_soft(&soft_dataset(&data.splits.dev, method, config.keep_ties)?, &featurizer)?;
            let cfg = TrainConfig { loss: LossKind::Soft, ..base };
            let t = train::train(&tr, &dev, spec, &cfg)?;
            best_epochs.insert("model".to_string(), t.log.best_epoch);
            (Predictor::Single(t.model), tr.len(), format!("soft:{method}"))
        }
        Approach::Ensemble => {
            let t = train::train_ensemble(
                &data.splits.train,
                &data.splits.dev,
                &featurizer,
                spec,
                &base,
                config.min_annotations,
            )?;
            let n: usize = t.logs.values().map(|l| l.trained_on.len()).sum();
            for (a, log) in &t.logs {
                best_epochs.insert(a.clone(), log.best_epoch);
            }
            skipped_annotators = t.skipped;
            (Predictor::Ensemble(t.ensemble), n, "annotator".to_string())
        }
    };

    let eval = evaluate_predictor(&predictor, &featurizer, &data.test, classes)?;
    Ok(Cell {
        approach,
        arch,
        featurizer,
        predictor,
        row: ReportRow {
            approach,
            arch,
            eval,
            train_examples,
            target_source,
            test_ids_hash: data.test_ids_hash(),
            best_epochs,
            skipped_annotators,
        },
    })
}

pub fn evaluate_predictor(
    predictor: &Predictor,
    featurizer: &Featurizer,
    test: &[TestItem],
    classes: usize,
) -> Result<EvalResult> {
    let mut labels = Vec::with_capacity(test.len());
    let mut dists = Vec::with_capacity(test.len());
    for item in test {
        let (label, dist) = predictor.predict_text(featurizer, &item.text)?;
        labels.push(label);
        dists.push(dist);
    }
    let golds: Vec<usize> = test.iter().map(|t| t.gold_label).collect();
    let gold_dists: Vec<LabelDistribution> = test.iter().map(|t| t.gold_dist.clone()).collect();
    evaluate(&labels, &dists, &golds, &gold_dists, classes)
}

/// Trains and evaluates every configured (approach, arch) pair, in parallel,
/// and assembles the report in approach-then-architecture order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    run_on_corpus(config, &corpus)
}

pub fn run_on_corpus(config: &ExperimentConfig, corpus: &AnnotationCorpus) -> Result<ExperimentReport> {
    run_cells(config, corpus).map(|(report, _)| report)
}

/// Like [`run_on_corpus`], also returning the trained cells.
pub fn run_cells(config: &ExperimentConfig, corpus: &AnnotationCorpus) -> Result<(ExperimentReport, Vec<Cell>)> {
    config.validate()?;
    let started_unix = unix_now();
    let data = prepare(config, corpus)?;

    let mut grid: Vec<(Approach, Arch)> = Vec::new();
    let mut approaches = config.approaches.clone();
    approaches.sort();
    let mut archs = config.archs.clone();
    archs.sort();
    for &ap in &approaches {
        for &ar in &archs {
            grid.push((ap, ar));
        }
    }

    let cells: Vec<Result<Cell>> = grid
        .par_iter()
        .map(|&(ap, ar)| {
            run_cell(config, &data, ap, ar).map_err(|e| e.context(format!("approach {ap}, arch {ar}")))
        })
        .collect();
    let cells: Vec<Cell> = cells.into_iter().collect::<Result<_>>()?;

    let explanations = if config.explain.enabled {
        explain_cells(config, &data, &cells)?
    } else {
        Vec::new()
    };

    let provenance = Provenance {
        config_hash: config.hash(),
        root_seed: config.seed,
        split_seed: split_seed(config.seed),
        cell_seeds: grid
            .iter()
            .map(|&(ap, ar)| (format!("{ap}/{ar}"), cell_seeds(config.seed, ap, ar)))
            .collect(),
        soft_label_method: config.soft_method,
        tie_policy: format!(
            "test: ties dropped; majority and ensemble training: ties dropped; multip training: ties {}",
            if config.keep_ties { "kept" } else { "dropped" }
        ),
        split: config.split,
        train_size: data.splits.train.len(),
        dev_size: data.splits.dev.len(),
        test_size: data.test.len(),
        test_ties_dropped: data.test_ties_dropped,
        test_ids_hash: data.test_ids_hash(),
        vocab_size: data.vocab.len(),
        gold_labels: "strict majority vote".into(),
        gold_distributions: format!("corpus soft labels ({})", config.soft_method),
        conventions: BTreeMap::from([
            ("jsd".into(), "base-2 logarithm, range [0, 1]".into()),
            ("macro_f1".into(), "zero-support classes count as F1 = 0".into()),
            ("ensemble_distribution".into(), "mean of member distributions".into()),
            ("ensemble_label".into(), "member majority vote, ties to the lowest class".into()),
            ("shap_base".into(), "model output on the empty text".into()),
        ]),
        started_unix,
        finished_unix: unix_now(),
    };
    let report = ExperimentReport {
        rows: cells.iter().map(|c| c.row.clone()).collect(),
        provenance,
        explanations,
    };
    Ok((report, cells))
}

/// The top-k size for agreement: fixed, or the rounded mean in-vocabulary
/// token count of the test split.
pub fn resolve_k(config: &ExperimentConfig, data: &PreparedData) -> usize {
    match config.explain.config.k {
        TopK::Fixed(k) => k,
        TopK::Auto => {
            let f = featurizer_for(config, &data.vocab, Arch::Linear);
            let counts: Vec<usize> = data.test.iter().map(|t| f.effective_ids(&t.text).len()).collect();
            default_k(&counts)
        }
    }
}

/// Selects the lowest-confidence test instances of one trained predictor and
/// explains them with every configured method.
pub fn explain_predictor(
    config: &ExperimentConfig,
    data: &PreparedData,
    approach: Approach,
    arch: Arch,
    predictor: &Predictor,
    featurizer: &Featurizer,
    k: usize,
) -> Result<CellExplanations> {
    let model: &ClassifierModel = match predictor {
        Predictor::Single(m) => m,
        Predictor::Ensemble(_) => {
            return Ok(CellExplanations::skipped(
                approach,
                arch,
                "an ensemble has no single model to attribute",
            ))
        }
    };
    let items: Vec<(String, String)> = data.test.iter().map(|t| (t.id.clone(), t.text.clone())).collect();
    let selected = select_low_confidence(predictor, featurizer, &items, config.explain.instances)?;
    let chosen: Vec<(String, String)> = selected.iter().map(|s| (s.id.clone(), s.text.clone())).collect();
    let mut out = explain_instances(model, featurizer, &chosen, &config.explain.methods, &config.explain.config, k)
        .map_err(|e| e.context(format!("explaining approach {approach}, arch {arch}")))?;
    out.approach = approach;
    out.arch = arch;
    out.selected = selected;
    Ok(out)
}

fn explain_cells(config: &ExperimentConfig, data: &PreparedData, cells: &[Cell]) -> Result<Vec<CellExplanations>> {
    let k = resolve_k(config, data);
    let targets: Vec<&Cell> = cells
        .iter()
        .filter(|c| config.explain.approaches.contains(&c.approach))
        .collect();
    targets
        .par_iter()
        .map(|cell| explain_predictor(config, data, cell.approach, cell.arch, &cell.predictor, &cell.featurizer, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::SynthSpec;
    use crate::train::TrainConfig;

    fn small_config() -> ExperimentConfig {
        let quick = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        ExperimentConfig {
            corpus: CorpusSource::Synth(SynthSpec {
                n_instances: 200,
                ..SynthSpec::default()
            }),
            archs: vec![Arch::Linear],
            training: super::super::config::TrainingConfigs {
                majority: quick,
                ensemble: quick,
                multip: quick,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_row_per_cell_on_a_shared_test_split() {
        let r = run_experiment(&small_config()).unwrap();
        assert_eq!(r.rows.len(), 3);
        let hashes: Vec<&str> = r.rows.iter().map(|row| row.test_ids_hash.as_str()).collect();
        assert!(hashes.iter().all(|h| *h == r.provenance.test_ids_hash));
        assert_eq!(r.row(Approach::Majority, Arch::Linear).unwrap().target_source, "majority");
        assert_eq!(
            r.row(Approach::Multip, Arch::Linear).unwrap().target_source,
            "soft:softmax_counts"
        );
        assert_eq!(r.provenance.gold_labels, "strict majority vote");
    }

    #[test]
    fn report_is_reproducible() {
        let a = run_experiment(&small_config()).unwrap();
        let b = run_experiment(&small_config()).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn cell_seeds_are_independent_of_other_cells() {
        let s = cell_seeds(3, Approach::Multip, Arch::Mlp);
        assert_eq!(s, cell_seeds(3, Approach::Multip, Arch::Mlp));
        assert_ne!(s, cell_seeds(3, Approach::Majority, Arch::Mlp));
    }
}
