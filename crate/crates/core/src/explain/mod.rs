//! Post-hoc feature attribution.
//!
//! Five methods: integrated gradients, layer conductance, LIME, KernelSHAP
//! and attention weights. Each returns an [`Attribution`] in one of three
//! units:
//!
//! - [`Unit::Token`]: one score per position of the model's token sequence.
//! - [`Unit::Feature`]: one score per vocabulary entry present in the text.
//! - [`Unit::Neuron`]: one score per hidden unit.
//!
//! Token-level scores can be pooled to feature level with
//! [`Attribution::pool_positions`] so that any two methods can be compared
//! with [`agreement`].

mod gradients;
mod html;
mod lime;
mod shap;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::featurize::{FeatureMode, Features, Featurizer, Vocabulary};
use crate::model::{Arch, ClassifierModel, ModelInput};

pub use gradients::{integrated_gradients, layer_conductance};
pub use html::{escape as escape_html, render_fragment, render_html, STYLE as HTML_STYLE};
pub use lime::lime_explain;
pub use shap::{kernel_shap, kernel_shap_game, ShapGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Token,
    Feature,
    Neuron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ig,
    Conductance,
    Lime,
    Shap,
    Attention,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ig,
        Method::Conductance,
        Method::Lime,
        Method::Shap,
        Method::Attention,
    ];

    pub fn supports(self, arch: Arch) -> bool {
        match self {
            Method::Ig | Method::Lime | Method::Shap => true,
            Method::Conductance => arch != Arch::Linear,
            Method::Attention => arch == Arch::AttnPool,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ig => "ig",
            Method::Conductance => "conductance",
            Method::Lime => "lime",
            Method::Shap => "shap",
            Method::Attention => "attention",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Argument(format!("unknown explanation method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub index: usize,
    pub display: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub unit: Unit,
    pub target_class: usize,
    pub scores: Vec<Score>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Attribution {
    pub fn new(method: Method, unit: Unit, target_class: usize, scores: Vec<Score>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &scores {
            if !seen.insert(s.index) {
                return Err(Error::Validation(format!("duplicate attribution index {}", s.index)));
            }
            if !s.score.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite attribution for index {}",
                    s.index
                )));
            }
        }
        Ok(Self {
            method,
            unit,
            target_class,
            scores,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.score).collect()
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().map(|s| s.score).sum()
    }

    pub fn score_of(&self, index: usize) -> Option<f64> {
        self.scores.iter().find(|s| s.index == index).map(|s| s.score)
    }

    /// Sums token-position scores into one score per vocabulary id. `ids[p]`
    /// is the vocabulary id at position `p`.
    pub fn pool_positions(&self, ids: &[usize], vocab: &Vocabulary) -> Result<Attribution> {
        if self.unit != Unit::Token {
            return Err(Error::Argument(format!(
                "only token attributions can be pooled, got {:?}",
                self.unit
            )));
        }
        let mut pooled: BTreeMap<usize, f64> = BTreeMap::new();
        let mut order = Vec::new();
        for s in &self.scores {
            let id = *ids.get(s.index).ok_or_else(|| {
                Error::Argument(format!("position {} outside the sequence", s.index))
            })?;
            let slot = pooled.entry(id).or_insert_with(|| {
                order.push(id);
                0.0
            });
            *slot += s.score;
        }
        let scores = order
            .into_iter()
            .map(|id| Score {
                index: id,
                display: vocab.token(id).unwrap_or_default().to_string(),
                score: pooled[&id],
            })
            .collect();
        let mut out = Attribution::new(self.method, Unit::Feature, self.target_class, scores)?;
        out.metadata = self.metadata.clone();
        Ok(out.with_meta("pooled_from", "token"))
    }

    fn label_features(mut self, vocab: &Vocabulary) -> Self {
        for s in &mut self.scores {
            s.display = vocab.token(s.index).unwrap_or_default().to_string();
        }
        self
    }

    fn label_positions(mut self, ids: &[usize], vocab: &Vocabulary) -> Self {
        for s in &mut self.scores {
            s.display = ids
                .get(s.index)
                .and_then(|&id| vocab.token(id))
                .unwrap_or_default()
                .to_string();
        }
        self
    }
}

/// Number of coalitions for KernelSHAP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapSamples {
    /// Enumerate every coalition; limited to [`MAX_EXACT_SHAP_TOKENS`].
    Exact,
    /// Sample this many coalitions, or enumerate when that is cheaper.
    Sampled(usize),
}

pub const MAX_EXACT_SHAP_TOKENS: usize = 15;

/// Top-k size: a fixed count, or the rounded mean token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopK {
    Auto,
    Fixed(usize),
}

macro_rules! keyword_or_count {
    ($ty:ident, $kw:literal, $kw_variant:ident, $n_variant:ident) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self {
                    $ty::$kw_variant => f.write_str($kw),
                    $ty::$n_variant(n) => write!(f, "{n}"),
                }
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                if s == $kw {
                    return Ok($ty::$kw_variant);
                }
                match s.parse::<usize>() {
                    Ok(n) if n >= 1 => Ok($ty::$n_variant(n)),
                    _ => Err(Error::Argument(format!(
                        concat!("expected \"", $kw, "\" or a positive integer, got {:?}"),
                        s
                    ))),
                }
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                match self {
                    $ty::$kw_variant => s.serialize_str($kw),
                    $ty::$n_variant(n) => s.serialize_u64(*n as u64),
                }
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Raw {
                    N(u64),
                    S(String),
                }
                let text = match Raw::deserialize(d)? {
                    Raw::N(n) => n.to_string(),
                    Raw::S(s) => s,
                };
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

keyword_or_count!(ShapSamples, "exact", Exact, Sampled);
keyword_or_count!(TopK, "auto", Auto, Fixed);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub ig_steps: usize,
    pub lime_samples: usize,
    /// `None` means `0.75 * sqrt(d)` for `d` distinct tokens.
    pub lime_kernel_width: Option<f64>,
    pub shap_samples: ShapSamples,
    pub k: TopK,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            ig_steps: 200,
            lime_samples: 1000,
            lime_kernel_width: None,
            shap_samples: ShapSamples::Sampled(2048),
            k: TopK::Auto,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ig_steps < 2 {
            return Err(Error::Argument("ig_steps must be >= 2".into()));
        }
        if self.lime_samples < 1 {
            return Err(Error::Argument("lime_samples must be >= 1".into()));
        }
        if let Some(w) = self.lime_kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Argument(format!("lime_kernel_width must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Rounded mean token count, at least 1.
pub fn default_k(token_counts: &[usize]) -> usize {
    if token_counts.is_empty() {
        return 1;
    }
    let mean = token_counts.iter().sum::<usize>() as f64 / token_counts.len() as f64;
    (mean.round() as usize).max(1)
}

/// The `k` entries with the largest `|score|`, ties to the lower index, in
/// rank order. Scores are preserved.
pub fn top_k(attr: &Attribution, k: usize) -> Result<Attribution> {
    if k == 0 {
        return Err(Error::Argument("k must be >= 1".into()));
    }
    let mut ranked = attr.scores.clone();
    ranked.sort_by(|a, b| {
        b.score
            .abs()
            .total_cmp(&a.score.abs())
            .then(a.index.cmp(&b.index))
    });
    ranked.truncate(k);
    Ok(Attribution {
        scores: ranked,
        ..attr.clone()
    })
}

/// Overlap of the two top-k index sets divided by the number of entries
/// kept, so identical attributions always agree fully.
pub fn agreement(a: &Attribution, b: &Attribution, k: usize) -> Result<f64> {
    if a.unit != b.unit {
        return Err(Error::Argument(format!(
            "cannot compare {:?} attributions with {:?} attributions",
            a.unit, b.unit
        )));
    }
    let ta: BTreeSet<usize> = top_k(a, k)?.scores.iter().map(|s| s.index).collect();
    let tb: BTreeSet<usize> = top_k(b, k)?.scores.iter().map(|s| s.index).collect();
    let kept = ta.len().min(tb.len());
    if kept == 0 {
        return Ok(0.0);
    }
    Ok(ta.intersection(&tb).count() as f64 / kept as f64)
}

/// Per-position attention weights of an attention-pooling model.
pub fn attention_scores(model: &ClassifierModel, ids: &[usize]) -> Result<Attribution> {
    if model.spec().arch != Arch::AttnPool {
        return Err(Error::UnsupportedArchitecture(format!(
            "{} has no attention weights",
            model.spec().arch
        )));
    }
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (logits, cache) = model.forward(ModelInput::Tokens(ids))?;
    let alpha = cache.attention().expect("attention pooling cache");
    let scores = alpha
        .iter()
        .enumerate()
        .map(|(index, &score)| Score {
            index,
            display: String::new(),
            score,
        })
        .collect();
    Attribution::new(Method::Attention, Unit::Token, crate::math::argmax(&logits), scores)
}

/// Logits for the text made of exactly `ids`, which may be empty.
pub(crate) fn logits_for_ids(model: &ClassifierModel, featurizer: &Featurizer, ids: &[usize]) -> Result<Vec<f64>> {
    match featurizer.mode {
        FeatureMode::Sequence => {
            let n = ids.len().min(featurizer.max_len);
            model.logits(ModelInput::Tokens(&ids[..n]))
        }
        _ => match featurizer.from_ids(ids)? {
            Features::Vector(v) => model.logits(ModelInput::Vector(&v.0)),
            Features::Sequence(_) => unreachable!("vector mode"),
        },
    }
}

pub(crate) fn probs_for_ids(model: &ClassifierModel, featurizer: &Featurizer, ids: &[usize]) -> Result<Vec<f64>> {
    Ok(crate::math::softmax(&logits_for_ids(model, featurizer, ids)?))
}

/// Distinct in-vocabulary ids of `text` in order of first appearance.
pub(crate) fn distinct_ids(featurizer: &Featurizer, text: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let ids = featurizer.effective_ids(text);
    let mut seen = BTreeSet::new();
    let distinct: Vec<usize> = ids.iter().copied().filter(|id| seen.insert(*id)).collect();
    if distinct.is_empty() {
        return Err(Error::Argument(format!(
            "text has no in-vocabulary tokens: {text:?}"
        )));
    }
    Ok((ids, distinct))
}

/// Runs one method on one text and labels the scores with their tokens.
/// `stream_key` (usually the instance id) selects the random stream of the
/// sampling-based methods.
pub fn explain_text(
    model: &ClassifierModel,
    featurizer: &Featurizer,
    text: &str,
    method: Method,
    target_class: usize,
    config: &ExplainConfig,
    stream_key: &str,
) -> Result<Attribution> {
    config.validate()?;
    let arch = model.spec().arch;
    if !method.supports(arch) {
        return Err(Error::UnsupportedArchitecture(format!(
            "{method} is not available for {arch}"
        )));
    }
    let vocab = &featurizer.vocab;
    let ids = featurizer.effective_ids(text);
    let features = featurizer.featurize(text)?;
    let input = ModelInput::from(&features);
    Ok(match method {
        Method::Ig => {
            let a = integrated_gradients(model, input, None, target_class, config.ig_steps)?;
            match a.unit {
                Unit::Token => a.label_positions(&ids, vocab),
                _ => a.label_features(vocab),
            }
        }
        Method::Conductance => layer_conductance(model, input, None, target_class, config.ig_steps)?,
        Method::Lime => lime_explain(model, featurizer, text, target_class, config, stream_key)?,
        Method::Shap => kernel_shap(model, featurizer, text, target_class, config, stream_key)?,
        Method::Attention => {
            let mut a = attention_scores(model, &ids)?.label_positions(&ids, vocab);
            a.target_class = target_class;
            a
        }
    })
}

/// JSON document for one explained instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceExplanation {
    pub instance_id: String,
    pub text: String,
    pub predicted_class: usize,
    pub confidence: f64,
    pub attributions: Vec<Attribution>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(scores: &[f64]) -> Attribution {
        let s = scores
            .iter()
            .enumerate()
            .map(|(index, &score)| Score {
                index,
                display: String::new(),
                score,
            })
            .collect();
        Attribution::new(Method::Lime, Unit::Feature, 0, s).unwrap()
    }

    fn indices(a: &Attribution) -> Vec<usize> {
        a.scores.iter().map(|s| s.index).collect()
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(indices(&top_k(&attr(&[0.5, -0.9, 0.1]), 2).unwrap()), vec![1, 0]);
        assert_eq!(indices(&top_k(&attr(&[0.5, -0.5]), 1).unwrap()), vec![0]);
        assert_eq!(indices(&top_k(&attr(&[-0.5, 0.5]), 1).unwrap()), vec![0]);
        let a = attr(&[0.1, 0.2, 0.3]);
        let all = top_k(&a, 7).unwrap();
        assert_eq!(all.scores.len(), 3);
        assert_eq!(top_k(&a, 2).unwrap().scores[0].score, 0.3);
        assert!(top_k(&a, 0).is_err());
    }

    #[test]
    fn agreement_examples() {
        let a = attr(&[0.9, 0.8, 0.7, 0.0, 0.0]);
        assert_eq!(agreement(&a, &a, 3).unwrap(), 1.0);
        let disjoint = attr(&[0.0, 0.0, 0.0, 0.9, 0.8]);
        assert_eq!(agreement(&a, &disjoint, 2).unwrap(), 0.0);
        let two_shared = attr(&[0.9, 0.8, 0.0, 0.7, 0.0]);
        assert!((agreement(&a, &two_shared, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let mut neuron = a.clone();
        neuron.unit = Unit::Neuron;
        assert!(matches!(agreement(&a, &neuron, 2), Err(Error::Argument(_))));
    }

    #[test]
    fn attribution_rejects_duplicates_and_nan() {
        let dup = vec![
            Score { index: 1, display: String::new(), score: 0.1 },
            Score { index: 1, display: String::new(), score: 0.2 },
        ];
        assert!(Attribution::new(Method::Ig, Unit::Feature, 0, dup).is_err());
        let nan = vec![Score { index: 0, display: String::new(), score: f64::NAN }];
        assert!(Attribution::new(Method::Ig, Unit::Feature, 0, nan).is_err());
    }

    #[test]
    fn default_k_rounds_mean_length() {
        assert_eq!(default_k(&[3, 4, 4]), 4);
        assert_eq!(default_k(&[2, 3]), 3);
        assert_eq!(default_k(&[]), 1);
        assert_eq!(default_k(&[0]), 1);
    }

    #[test]
    fn keyword_or_count_parsing() {
        assert_eq!("exact".parse::<ShapSamples>().unwrap(), ShapSamples::Exact);
        assert_eq!("300".parse::<ShapSamples>().unwrap(), ShapSamples::Sampled(300));
        assert_eq!("auto".parse::<TopK>().unwrap(), TopK::Auto);
        assert_eq!("5".parse::<TopK>().unwrap(), TopK::Fixed(5));
        assert!("0".parse::<TopK>().is_err());
        let cfg: ExplainConfig = serde_json::from_str(r#"{"shap_samples":"exact","k":3}"#).unwrap();
        assert_eq!((cfg.shap_samples, cfg.k), (ShapSamples::Exact, TopK::Fixed(3)));
        let back: ExplainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn method_round_trip_and_support() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
            assert!(m.supports(Arch::AttnPool));
        }
        assert!(!Method::Conductance.supports(Arch::Linear));
        assert!(!Method::Attention.supports(Arch::Mlp));
    }
}
