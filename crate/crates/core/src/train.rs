//! Losses, mini-batch gradient descent and the three training regimes:
//! majority-vote hard labels, one model per annotator, and soft labels.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{HardLabelDataset, LabelDistribution, SoftLabelDataset};
use crate::corpus::AnnotationCorpus;
use crate::error::{Error, Result};
use crate::featurize::{Features, Featurizer};
use crate::math;
use crate::model::{ClassifierModel, ModelInput, ModelSpec};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    HardCe,
    Soft,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HardCe => "hard_ce",
            Self::Soft => "soft",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard_ce" | "hard" => Ok(Self::HardCe),
            "soft" => Ok(Self::Soft),
            other => Err(Error::Argument(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            loss: LossKind::HardCe,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 || self.max_epochs < 1 || self.patience < 1 {
            return Err(Error::Argument(
                "batch_size, max_epochs and patience must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Cross-entropy against a gold class: `-ln p(gold)`, gradient `p - onehot`.
pub fn hard_ce_loss(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let log_p = math::log_softmax(logits);
    let mut grad: Vec<f64> = log_p.iter().map(|lp| lp.exp()).collect();
    grad[gold] -= 1.0;
    (-log_p[gold], grad)
}

/// Cross-entropy against a target distribution, `-Σ t_c ln p_c`, with
/// `0 · ln 0 = 0`. Gradient is `p - t`.
pub fn soft_loss(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let log_p = math::log_softmax(logits);
    let loss = -target
        .iter()
        .zip(&log_p)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, lp)| t * lp)
        .sum::<f64>();
    let grad = log_p.iter().zip(target).map(|(lp, t)| lp.exp() - t).collect();
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Hard(usize),
    Soft(LabelDistribution),
}

impl Target {
    fn kind(&self) -> LossKind {
        match self {
            Target::Hard(_) => LossKind::HardCe,
            Target::Soft(_) => LossKind::Soft,
        }
    }

    pub fn loss(&self, logits: &[f64]) -> (f64, Vec<f64>) {
        match self {
            Target::Hard(c) => hard_ce_loss(logits, *c),
            Target::Soft(t) => soft_loss(logits, t.probs()),
        }
    }
}

/// A featurized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: Features,
    pub target: Target,
}

/// Features for one text, or `None` when a sequence featurizer finds no
/// in-vocabulary token. Such texts cannot be represented and are skipped.
pub fn featurize_or_skip(featurizer: &Featurizer, id: &str, text: &str) -> Result<Option<Features>> {
    match featurizer.featurize(text) {
        Ok(f) => Ok(Some(f)),
        Err(Error::EmptySequence) => Ok(None),
        Err(e) => Err(e.context(format!("instance {id:?}"))),
    }
}

fn build_examples<'a>(
    featurizer: &Featurizer,
    items: impl Iterator<Item = (&'a str, &'a str, Target)>,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (id, text, target) in items {
        if let Some(features) = featurize_or_skip(featurizer, id, text)? {
            out.push(Example {
                id: id.to_string(),
                features,
                target,
            });
        }
    }
    Ok(out)
}

pub fn examples_from_hard(ds: &HardLabelDataset, featurizer: &Featurizer) -> Result<Vec<Example>> {
    build_examples(
        featurizer,
        ds.items
            .iter()
            .map(|i| (i.id.as_str(), i.text.as_str(), Target::Hard(i.label))),
    )
}

pub fn examples_from_soft(ds: &SoftLabelDataset, featurizer: &Featurizer) -> Result<Vec<Example>> {
    build_examples(
        featurizer,
        ds.items
            .iter()
            .map(|i| (i.id.as_str(), i.text.as_str(), Target::Soft(i.target.clone()))),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Ids of every example the model was trained on, in dataset order.
    pub trained_on: Vec<String>,
}

impl TrainLog {
    /// `epoch,train_loss,dev_loss` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_loss\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{:.10},{:.10}\n", r.epoch, r.train_loss, r.dev_loss));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ClassifierModel,
    pub log: TrainLog,
}

pub fn mean_loss(model: &ClassifierModel, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let logits = model.logits(ModelInput::from(&ex.features))?;
        total += ex.target.loss(&logits).0;
    }
    Ok(total / examples.len() as f64)
}

/// A mean cross-entropy this large means the logits have blown up.
const DIVERGENCE_LOSS: f64 = 1e6;

/// Mini-batch gradient descent with a fixed learning rate and early
/// stopping on dev loss. Returns the parameters of the best dev epoch.
pub fn train(train: &[Example], dev: &[Example], spec: ModelSpec, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("no training examples".into()));
    }
    if dev.is_empty() {
        return Err(Error::EmptyDataset("no dev examples".into()));
    }
    for ex in train.iter().chain(dev) {
        if ex.target.kind() != config.loss {
            return Err(Error::Argument(format!(
                "example {:?} has a {} target but the loss is {}",
                ex.id,
                ex.target.kind(),
                config.loss
            )));
        }
        let ok = match &ex.target {
            Target::Hard(c) => *c < spec.class_count,
            Target::Soft(t) => t.class_count() == spec.class_count,
        };
        if !ok {
            return Err(Error::Argument(format!(
                "example {:?} does not fit {} classes",
                ex.id, spec.class_count
            )));
        }
    }

    let mut model = ClassifierModel::init(spec)?;
    let mut rng = seeding::stream(config.seed, &["train", "shuffle"]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; model.params().len()];
    let mut log = TrainLog {
        trained_on: train.iter().map(|e| e.id.clone()).collect(),
        ..TrainLog::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;
    let lr = config.learning_rate;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let ex = &train[i];
                let (logits, cache) = model.forward(ModelInput::from(&ex.features))?;
                let (loss, d_logits) = ex.target.loss(&logits);
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        learning_rate: lr,
                        loss,
                    });
                }
                total += loss;
                model.backward_into(&cache, &d_logits, &mut grad, false)?;
            }
            let step = lr / batch.len() as f64;
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        let train_loss = total / train.len() as f64;
        let dev_loss = mean_loss(&model, dev)?;
        let worst = train_loss.max(dev_loss);
        if worst.is_nan() || worst > DIVERGENCE_LOSS || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                learning_rate: lr,
                loss: worst,
            });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
        });
        match &best {
            Some((b, _)) if dev_loss >= *b => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((dev_loss, model.params().to_vec()));
                log.best_epoch = epoch;
                stale = 0;
            }
        }
    }

    let (_, params) = best.expect("at least one epoch ran");
    Ok(Trained {
        model: ClassifierModel::from_params(spec, params)?,
        log,
    })
}

/// One classifier per annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: BTreeMap<String, ClassifierModel>,
}

impl EnsembleModel {
    pub fn new(members: BTreeMap<String, ClassifierModel>) -> Result<Self> {
        let mut classes = members.values().map(ClassifierModel::class_count);
        let first = classes
            .next()
            .ok_or_else(|| Error::Argument("ensemble needs at least one member".into()))?;
        if classes.any(|c| c != first) {
            return Err(Error::Argument("ensemble members disagree on class_count".into()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &BTreeMap<String, ClassifierModel> {
        &self.members
    }

    pub fn class_count(&self) -> usize {
        self.members.values().next().expect("non-empty").class_count()
    }

    /// Directory with one checkpoint per member and a `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for (i, (annotator, model)) in self.members.iter().enumerate() {
            let file = format!("member_{i:03}.ckpt");
            model.save(&dir.join(&file))?;
            entries.push(ManifestEntry {
                annotator: annotator.clone(),
                file,
            });
        }
        let manifest = EnsembleManifest {
            format: ENSEMBLE_FORMAT.into(),
            class_count: self.class_count(),
            members: entries,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: EnsembleManifest = serde_json::from_slice(&bytes)?;
        if manifest.format != ENSEMBLE_FORMAT {
            return Err(Error::Validation(format!(
                "{} is not an ensemble manifest",
                path.display()
            )));
        }
        let mut members = BTreeMap::new();
        for entry in manifest.members {
            members.insert(entry.annotator, ClassifierModel::load(&dir.join(entry.file))?);
        }
        Self::new(members)
    }
}

const ENSEMBLE_FORMAT: &str = "perspective-ensemble";

#[derive(Serialize, Deserialize)]
struct EnsembleManifest {
    format: String,
    class_count: usize,
    members: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    annotator: String,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedAnnotator {
    pub annotator: String,
    pub annotations: usize,
}

#[derive(Debug, Clone)]
pub struct EnsembleTraining {
    pub ensemble: EnsembleModel,
    pub skipped: Vec<SkippedAnnotator>,
    pub logs: BTreeMap<String, TrainLog>,
}

pub const DEFAULT_MIN_ANNOTATIONS: usize = 5;

/// Trains one hard-label model per annotator with at least `min_annotations`
/// training labels, on exactly the instances that annotator labeled.
///
/// A member's dev set is the annotator's own dev labels; when the annotator
/// has none there, the member falls back to majority labels of the dev split.
pub fn train_ensemble(
    train_corpus: &AnnotationCorpus,
    dev_corpus: &AnnotationCorpus,
    featurizer: &Featurizer,
    spec: ModelSpec,
    config: &TrainConfig,
    min_annotations: usize,
) -> Result<EnsembleTraining> {
    let config = TrainConfig {
        loss: LossKind::HardCe,
        ..*config
    };
    let counts = train_corpus.annotation_counts();
    let mut skipped = Vec::new();
    let mut qualifying = Vec::new();
    for (annotator, n) in &counts {
        if *n >= min_annotations {
            qualifying.push(annotator.clone());
        } else {
            skipped.push(SkippedAnnotator {
                annotator: annotator.clone(),
                annotations: *n,
            });
        }
    }
    if qualifying.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no annotator has at least {min_annotations} training annotations"
        )));
    }

    let fallback_dev = match crate::aggregate::hard_dataset(dev_corpus) {
        Ok(ds) => examples_from_hard(&ds, featurizer)?,
        Err(_) => Vec::new(),
    };

    let trained: Vec<Result<(String, Trained)>> = qualifying
        .par_iter()
        .map(|annotator| {
            let train_ex = annotator_examples(train_corpus, annotator, featurizer)?;
            let mut dev_ex = annotator_examples(dev_corpus, annotator, featurizer)?;
            if dev_ex.is_empty() {
                dev_ex = fallback_dev.clone();
            }
            let member_spec = ModelSpec {
                seed: seeding::derive_seed(spec.seed, &["member", annotator]),
                ..spec
            };
            let member_config = TrainConfig {
                seed: seeding::derive_seed(config.seed, &["member", annotator]),
                ..config
            };
            let t = train(&train_ex, &dev_ex, member_spec, &member_config)
                .map_err(|e| e.context(format!("ensemble member {annotator:?}")))?;
            Ok((annotator.clone(), t))
        })
        .collect();

    let mut members = BTreeMap::new();
    let mut logs = BTreeMap::new();
    for r in trained {
        let (annotator, t) = r?;
        logs.insert(annotator.clone(), t.log);
        members.insert(annotator, t.model);
    }
    Ok(EnsembleTraining {
        ensemble: EnsembleModel::new(members)?,
        skipped,
        logs,
    })
}

fn annotator_examples(corpus: &AnnotationCorpus, annotator: &str, featurizer: &Featurizer) -> Result<Vec<Example>> {
    build_examples(
        featurizer,
        corpus.instances().iter().filter_map(|inst| {
            inst.label_of(annotator)
                .map(|label| (inst.id.as_str(), inst.text.as_str(), Target::Hard(label)))
        }),
    )
}

/// Every member votes its argmax; the label is the majority vote with ties
/// broken toward the lowest class. The distribution is the mean of the
/// members' distributions.
pub fn ensemble_predict(ensemble: &EnsembleModel, input: ModelInput<'_>) -> Result<(usize, LabelDistribution)> {
    let k = ensemble.class_count();
    let mut votes = vec![0usize; k];
    let mut dists = Vec::with_capacity(ensemble.members.len());
    for model in ensemble.members.values() {
        let d = model.predict_proba(input)?;
        votes[d.argmax()] += 1;
        dists.push(d);
    }
    let label = majority_lowest(&votes);
    Ok((label, LabelDistribution::mean(&dists)?))
}

fn majority_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Annotation, Instance};
    use crate::featurize::{build_vocab, FeatureMode};
    use crate::model::Arch;
    use proptest::prelude::*;

    #[test]
    fn hard_ce_examples() {
        let (loss, _) = hard_ce_loss(&[1.0, 0.0], 0);
        // -ln(e/(e+1)) = ln(1 + e^-1)
        assert!((loss - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!((loss - 0.3133).abs() < 5e-5);
        let (tiny, _) = hard_ce_loss(&[30.0, 0.0], 0);
        assert!(tiny < 1e-9);
    }

    #[test]
    fn soft_loss_examples() {
        let (l, g) = soft_loss(&[0.0, 0.0], &[0.5, 0.5]);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let (hl, hg) = hard_ce_loss(&[0.4, -1.3, 2.0], 1);
        let (sl, sg) = soft_loss(&[0.4, -1.3, 2.0], &[0.0, 1.0, 0.0]);
        assert_eq!(hl, sl);
        assert_eq!(hg, sg);
    }

    #[test]
    fn zero_target_classes_ignore_vanishing_probability() {
        let (l, _) = soft_loss(&[0.0, -1e6], &[1.0, 0.0]);
        assert!(l.is_finite() && l < 1e-12);
    }

    proptest! {
        #[test]
        fn loss_gradient_matches_finite_differences(
            logits in prop::collection::vec(-3.0f64..3.0, 2..5),
            raw in prop::collection::vec(0.01f64..1.0, 5),
        ) {
            let k = logits.len();
            let s: f64 = raw[..k].iter().sum();
            let target: Vec<f64> = raw[..k].iter().map(|v| v / s).collect();
            let (_, grad) = soft_loss(&logits, &target);
            let h = 1e-6;
            for c in 0..k {
                let mut up = logits.clone();
                let mut dn = logits.clone();
                up[c] += h;
                dn[c] -= h;
                let fd = (soft_loss(&up, &target).0 - soft_loss(&dn, &target).0) / (2.0 * h);
                prop_assert!((fd - grad[c]).abs() / (grad[c].abs() + 1e-8) < 1e-6 || (fd - grad[c]).abs() < 1e-9);
            }
        }
    }

    fn separable() -> (Vec<Example>, Featurizer) {
        let texts: Vec<(String, usize)> = (0..40)
            .map(|i| {
                if i % 2 == 0 {
                    (format!("alpha beta gamma w{}", i % 5), 0)
                } else {
                    (format!("delta epsilon zeta w{}", i % 5), 1)
                }
            })
            .collect();
        let vocab = build_vocab(&texts.iter().map(|t| t.0.as_str()).collect::<Vec<_>>(), 1, 100).unwrap();
        let f = Featurizer::new(vocab, FeatureMode::Tfidf);
        let ex = texts
            .iter()
            .enumerate()
            .map(|(i, (t, y))| Example {
                id: format!("e{i}"),
                features: f.featurize(t).unwrap(),
                target: Target::Hard(*y),
            })
            .collect();
        (ex, f)
    }

    fn lin_spec(d: usize) -> ModelSpec {
        ModelSpec {
            arch: Arch::Linear,
            input_dim: d,
            hidden_dim: 1,
            class_count: 2,
            seed: 3,
        }
    }

    #[test]
    fn separable_data_is_fit() {
        let (ex, f) = separable();
        let cfg = TrainConfig {
            max_epochs: 200,
            patience: 200,
            ..TrainConfig::default()
        };
        let t = train(&ex, &ex, lin_spec(f.vocab.len()), &cfg).unwrap();
        let correct = ex
            .iter()
            .filter(|e| {
                let p = t.model.predict_proba(ModelInput::from(&e.features)).unwrap();
                Target::Hard(p.argmax()) == e.target
            })
            .count();
        assert_eq!(correct, ex.len());
    }

    #[test]
    fn full_batch_losses_do_not_increase() {
        let (ex, f) = separable();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: ex.len(),
            max_epochs: 20,
            patience: 100,
            ..TrainConfig::default()
        };
        let t = train(&ex, &ex, lin_spec(f.vocab.len()), &cfg).unwrap();
        assert_eq!(t.log.epochs.len(), 20);
        for w in t.log.epochs.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss, "{:?}", w);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (ex, f) = separable();
        let cfg = TrainConfig {
            max_epochs: 10,
            ..TrainConfig::default()
        };
        let a = train(&ex, &ex, lin_spec(f.vocab.len()), &cfg).unwrap();
        let b = train(&ex, &ex, lin_spec(f.vocab.len()), &cfg).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut ex, f) = separable();
        // contradictory labels keep the loss from saturating at zero
        let flipped: Vec<Example> = ex
            .iter()
            .map(|e| Example {
                id: format!("{}-flip", e.id),
                target: match e.target {
                    Target::Hard(y) => Target::Hard(1 - y),
                    Target::Soft(_) => unreachable!(),
                },
                ..e.clone()
            })
            .collect();
        ex.extend(flipped);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            max_epochs: 20,
            ..TrainConfig::default()
        };
        match train(&ex, &ex, lin_spec(f.vocab.len()), &cfg) {
            Err(Error::Divergence { learning_rate, .. }) => assert_eq!(learning_rate, 1e300),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn loss_kind_must_match_targets() {
        let (ex, f) = separable();
        let cfg = TrainConfig {
            loss: LossKind::Soft,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&ex, &ex, lin_spec(f.vocab.len()), &cfg),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn train_log_csv_header() {
        let log = TrainLog {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                dev_loss: 0.25,
            }],
            ..TrainLog::default()
        };
        assert!(log.to_csv().starts_with("epoch,train_loss,dev_loss\n1,"));
    }

    fn corpus_with(labels: &[(&str, usize)]) -> AnnotationCorpus {
        // annotator "a" labels every instance, "b" only the first `nb`
        let nb = labels.iter().find(|(n, _)| *n == "b").map(|x| x.1).unwrap_or(0);
        let na = labels.iter().find(|(n, _)| *n == "a").map(|x| x.1).unwrap_or(0);
        let instances = (0..na)
            .map(|i| {
                let y = i % 2;
                let mut annotations = vec![Annotation {
                    annotator: "a".into(),
                    label: y,
                }];
                if i < nb {
                    annotations.push(Annotation {
                        annotator: "b".into(),
                        label: y,
                    });
                }
                Instance {
                    id: format!("x{i}"),
                    text: if y == 0 { format!("red apple {i}") } else { format!("blue sky {i}") },
                    annotations,
                }
            })
            .collect();
        AnnotationCorpus::new(instances, 2).unwrap()
    }

    #[test]
    fn ensemble_floor_skips_sparse_annotators() {
        let c = corpus_with(&[("a", 10), ("b", 3)]);
        let texts: Vec<&str> = c.instances().iter().map(|i| i.text.as_str()).collect();
        let f = Featurizer::new(build_vocab(&texts, 1, 100).unwrap(), FeatureMode::Tfidf);
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let t = train_ensemble(&c, &c, &f, lin_spec(f.vocab.len()), &cfg, 5).unwrap();
        assert_eq!(t.ensemble.members().len(), 1);
        assert!(t.ensemble.members().contains_key("a"));
        assert_eq!(
            t.skipped,
            vec![SkippedAnnotator {
                annotator: "b".into(),
                annotations: 3
            }]
        );
        assert!(matches!(
            train_ensemble(&c, &c, &f, lin_spec(f.vocab.len()), &cfg, 50),
            Err(Error::EmptyDataset(_))
        ));
    }

    fn fixed_linear(bias: [f64; 2]) -> ClassifierModel {
        let s = ModelSpec {
            arch: Arch::Linear,
            input_dim: 1,
            hidden_dim: 1,
            class_count: 2,
            seed: 0,
        };
        let mut p = vec![0.0; 2];
        p.extend_from_slice(&bias);
        ClassifierModel::from_params(s, p).unwrap()
    }

    #[test]
    fn ensemble_vote_examples() {
        let sure1 = fixed_linear([0.0, 2.0]);
        let sure0 = fixed_linear([2.0, 0.0]);
        let e = EnsembleModel::new(BTreeMap::from([
            ("a".to_string(), sure1.clone()),
            ("b".to_string(), sure1.clone()),
            ("c".to_string(), sure0.clone()),
        ]))
        .unwrap();
        assert_eq!(ensemble_predict(&e, ModelInput::Vector(&[1.0])).unwrap().0, 1);
        let tie = EnsembleModel::new(BTreeMap::from([
            ("a".to_string(), sure0),
            ("b".to_string(), sure1),
        ]))
        .unwrap();
        assert_eq!(ensemble_predict(&tie, ModelInput::Vector(&[1.0])).unwrap().0, 0);
    }

    #[test]
    fn ensemble_mean_distribution() {
        // logit gaps ln 4 and ln 1.5 give (0.8, 0.2) and (0.6, 0.4)
        let a = fixed_linear([4f64.ln(), 0.0]);
        let b = fixed_linear([1.5f64.ln(), 0.0]);
        let e = EnsembleModel::new(BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)])).unwrap();
        let (_, d) = ensemble_predict(&e, ModelInput::Vector(&[1.0])).unwrap();
        assert!((d.probs()[0] - 0.7).abs() < 1e-12);
        assert!((d.probs()[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ensemble_save_load() {
        let e = EnsembleModel::new(BTreeMap::from([
            ("ann/1".to_string(), fixed_linear([0.1, 0.2])),
            ("ann 2".to_string(), fixed_linear([0.3, -0.2])),
        ]))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path()).unwrap();
        assert_eq!(EnsembleModel::load(dir.path()).unwrap(), e);
    }
}
