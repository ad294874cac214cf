//! Declarative experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::SoftLabelMethod;
use crate::corpus::{CorpusFormat, SplitRatios};
use crate::error::{Error, Result};
use crate::explain::{ExplainConfig, Method};
use crate::featurize::{FeatureMode, DEFAULT_MAX_LEN};
use crate::model::Arch;
use crate::seeding;
use crate::train::{TrainConfig, DEFAULT_MIN_ANNOTATIONS};

use super::select::DEFAULT_SELECTED;
use super::synth::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// One model on majority-vote labels.
    Majority,
    /// One model per annotator, majority vote at test time.
    Ensemble,
    /// One model on soft labels with the soft loss.
    Multip,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Majority, Approach::Ensemble, Approach::Multip];
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Majority => "majority",
            Approach::Ensemble => "ensemble",
            Approach::Multip => "multip",
        })
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Argument(format!("unknown approach {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorpusSource {
    File {
        path: PathBuf,
        format: CorpusFormat,
        classes: usize,
    },
    Synth(SynthSpec),
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Synth(SynthSpec::default())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfigs {
    pub majority: TrainConfig,
    pub ensemble: TrainConfig,
    pub multip: TrainConfig,
}

impl TrainingConfigs {
    pub fn for_approach(&self, approach: Approach) -> &TrainConfig {
        match approach {
            Approach::Majority => &self.majority,
            Approach::Ensemble => &self.ensemble,
            Approach::Multip => &self.multip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub mlp_hidden: usize,
    pub embedding: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            mlp_hidden: 32,
            embedding: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub min_df: usize,
    pub max_vocab: usize,
    pub max_len: usize,
    /// Mode for `linear` and `mlp`; `attnpool` always reads token sequences.
    pub vector_mode: FeatureMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            min_df: 2,
            max_vocab: 5000,
            max_len: DEFAULT_MAX_LEN,
            vector_mode: FeatureMode::Tfidf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainSettings {
    pub enabled: bool,
    pub methods: Vec<Method>,
    /// Lowest-confidence test instances explained per cell.
    pub instances: usize,
    /// Approaches whose models are explained. Ensembles have no single
    /// model and are always skipped.
    pub approaches: Vec<Approach>,
    #[serde(flatten)]
    pub config: ExplainConfig,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            methods: Method::ALL.to_vec(),
            instances: DEFAULT_SELECTED,
            approaches: vec![Approach::Multip],
            config: ExplainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root seed; every split, initialization, shuffle and sampler stream is
    /// derived from it.
    pub seed: u64,
    pub corpus: CorpusSource,
    pub soft_method: SoftLabelMethod,
    /// Keep tie instances in soft-label training data.
    pub keep_ties: bool,
    pub split: SplitRatios,
    pub archs: Vec<Arch>,
    pub approaches: Vec<Approach>,
    /// Seeds and loss kinds inside these are overridden per grid cell.
    pub training: TrainingConfigs,
    pub min_annotations: usize,
    pub model: ModelDims,
    pub features: FeatureConfig,
    pub explain: ExplainSettings,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusSource::default(),
            soft_method: SoftLabelMethod::default(),
            keep_ties: false,
            split: SplitRatios::default(),
            archs: Arch::ALL.to_vec(),
            approaches: Approach::ALL.to_vec(),
            training: TrainingConfigs::default(),
            min_annotations: DEFAULT_MIN_ANNOTATIONS,
            model: ModelDims::default(),
            features: FeatureConfig::default(),
            explain: ExplainSettings::default(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.archs.is_empty() || self.approaches.is_empty() {
            return Err(Error::Validation(
                "config needs at least one architecture and one approach".into(),
            ));
        }
        for list in [&self.archs.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                     &self.approaches.iter().map(|a| a.to_string()).collect::<Vec<_>>()]
        {
            let mut sorted = list.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(Error::Validation(format!("duplicate entries in {list:?}")));
            }
        }
        for a in Approach::ALL {
            self.training.for_approach(a).validate()?;
        }
        if self.model.mlp_hidden < 1 || self.model.embedding < 1 {
            return Err(Error::Validation("model dimensions must be >= 1".into()));
        }
        if self.features.max_vocab < 1 || self.features.max_len < 1 {
            return Err(Error::Validation("max_vocab and max_len must be >= 1".into()));
        }
        if self.explain.instances < 1 {
            return Err(Error::Validation("explain.instances must be >= 1".into()));
        }
        self.explain.config.validate()?;
        if let CorpusSource::Synth(spec) = &self.corpus {
            spec.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        seeding::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}
