//! Prediction wrappers, low-confidence selection and batch explanation.

use serde::{Deserialize, Serialize};

use crate::aggregate::LabelDistribution;
use crate::error::{Error, Result};
use crate::explain::{agreement, explain_text, logits_for_ids, Attribution, ExplainConfig, InstanceExplanation, Method, Unit};
use crate::featurize::Featurizer;
use crate::model::{Arch, ClassifierModel};
use crate::train::EnsembleModel;

use super::config::Approach;

/// A trained single model or per-annotator ensemble.
#[derive(Debug, Clone)]
pub enum Predictor {
    Single(ClassifierModel),
    Ensemble(EnsembleModel),
}

impl Predictor {
    /// Predicted label and distribution for a raw text. Texts with no
    /// in-vocabulary token are scored as the empty input.
    pub fn predict_text(&self, featurizer: &Featurizer, text: &str) -> Result<(usize, LabelDistribution)> {
        let ids = featurizer.effective_ids(text);
        let dist_of = |m: &ClassifierModel| -> Result<LabelDistribution> {
            Ok(LabelDistribution::from_logits(&logits_for_ids(m, featurizer, &ids)?))
        };
        match self {
            Predictor::Single(m) => {
                let d = dist_of(m)?;
                Ok((d.argmax(), d))
            }
            Predictor::Ensemble(e) => {
                let mut votes = vec![0usize; e.class_count()];
                let mut dists = Vec::with_capacity(e.members().len());
                for m in e.members().values() {
                    let d = dist_of(m)?;
                    votes[d.argmax()] += 1;
                    dists.push(d);
                }
                let mut label = 0;
                for (c, &v) in votes.iter().enumerate() {
                    if v > votes[label] {
                        label = c;
                    }
                }
                Ok((label, LabelDistribution::mean(&dists)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub id: String,
    pub text: String,
    pub predicted_class: usize,
    pub confidence: f64,
}

pub const DEFAULT_SELECTED: usize = 5;

/// The `n` items with the lowest confidence (max class probability),
/// ascending, ties broken by id.
pub fn select_low_confidence(
    predictor: &Predictor,
    featurizer: &Featurizer,
    items: &[(String, String)],
    n: usize,
) -> Result<Vec<Selected>> {
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    let mut scored = items
        .iter()
        .map(|(id, text)| {
            let (predicted_class, dist) = predictor.predict_text(featurizer, text)?;
            Ok(Selected {
                id: id.clone(),
                text: text.clone(),
                predicted_class,
                confidence: dist.max_prob(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.confidence.total_cmp(&b.confidence).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(n);
    Ok(scored)
}

/// Explanations of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellExplanations {
    pub approach: Approach,
    pub arch: Arch,
    pub k: usize,
    pub methods: Vec<Method>,
    pub selected: Vec<Selected>,
    pub instances: Vec<InstanceExplanation>,
    /// Mean top-k agreement between methods, averaged over instances;
    /// `None` where the units are not comparable (neurons against tokens).
    pub agreement: Vec<Vec<Option<f64>>>,
    /// Methods not run, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl CellExplanations {
    pub fn skipped(approach: Approach, arch: Arch, reason: &str) -> Self {
        Self {
            approach,
            arch,
            k: 0,
            methods: Vec::new(),
            selected: Vec::new(),
            instances: Vec::new(),
            agreement: Vec::new(),
            skipped: vec![("all".into(), reason.into())],
        }
    }
}

fn comparable(attr: &Attribution, ids: &[usize], featurizer: &Featurizer) -> Result<Attribution> {
    match attr.unit {
        Unit::Token => attr.pool_positions(ids, &featurizer.vocab),
        _ => Ok(attr.clone()),
    }
}

/// Runs every compatible method on every instance, targeting the predicted
/// class, and averages pairwise top-k agreement. Token-level attributions
/// are pooled to vocabulary features before comparison.
pub fn explain_instances(
    model: &ClassifierModel,
    featurizer: &Featurizer,
    instances: &[(String, String)],
    methods: &[Method],
    config: &ExplainConfig,
    k: usize,
) -> Result<CellExplanations> {
    let arch = model.spec().arch;
    let (run, skipped): (Vec<Method>, Vec<Method>) = methods.iter().partition(|m| m.supports(arch));
    let skipped = skipped
        .into_iter()
        .map(|m| (m.to_string(), format!("{m} is not available for {arch}")))
        .collect();
    let predictor = Predictor::Single(model.clone());
    let m = run.len();
    let mut sums = vec![vec![0.0; m]; m];
    let mut counts = vec![vec![0usize; m]; m];
    let mut out = Vec::with_capacity(instances.len());

    for (id, text) in instances {
        let (predicted_class, dist) = predictor.predict_text(featurizer, text)?;
        let attributions = run
            .iter()
            .map(|&method| {
                explain_text(model, featurizer, text, method, predicted_class, config, id)
                    .map_err(|e| e.context(format!("{method} on instance {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let ids = featurizer.effective_ids(text);
        let level = attributions
            .iter()
            .map(|a| comparable(a, &ids, featurizer))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..m {
            for j in 0..m {
                if level[i].unit == level[j].unit {
                    sums[i][j] += agreement(&level[i], &level[j], k)?;
                    counts[i][j] += 1;
                }
            }
        }
        out.push(InstanceExplanation {
            instance_id: id.clone(),
            text: text.clone(),
            predicted_class,
            confidence: dist.max_prob(),
            attributions,
        });
    }

    let agreement = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (counts[i][j] > 0).then(|| sums[i][j] / counts[i][j] as f64))
                .collect()
        })
        .collect();
    Ok(CellExplanations {
        approach: Approach::Multip,
        arch,
        k,
        methods: run,
        selected: Vec::new(),
        instances: out,
        agreement,
        skipped,
    })
}
