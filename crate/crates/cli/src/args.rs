//! Command-line surface and the mapping from flags onto an experiment config.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use perspective::corpus::CorpusFormat;
use perspective::error::{Error, Result};
use perspective::harness::{CorpusSource, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "perspective",
    version,
    about = "Perspectivist text classification: soft-label training, disagreement-aware evaluation and attribution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a disaggregated corpus and write it back as normalized JSONL.
    Ingest(Overrides),
    /// Majority-class counts, annotator statistics and disagreement rates.
    Stats(Overrides),
    /// Write the seeded, stratified train/dev/test partition.
    Split(Overrides),
    /// Train one (approach, arch) cell and save it as a model directory.
    Train(Overrides),
    /// Evaluate a saved model directory on its test split.
    Eval(ModelArgs),
    /// Explain the lowest-confidence test instances of a saved model.
    Explain(ExplainArgs),
    /// Generate a synthetic disaggregated corpus.
    Synth(SynthArgs),
    /// Run the full approach × architecture grid and emit every report format.
    Run(Overrides),
    /// Re-render a saved report.json.
    Report(ReportArgs),
}

/// Flags shared by every subcommand; each one overrides its config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML experiment configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Corpus file; replaces the configured corpus source.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Corpus format: jsonl or csv (long format).
    #[arg(long, value_name = "FORMAT")]
    pub format: Option<String>,
    /// Number of label classes.
    #[arg(long, value_name = "N")]
    pub classes: Option<usize>,
    /// majority, ensemble or multip; repeat or comma-separate for several.
    #[arg(long, value_name = "APPROACH", value_delimiter = ',')]
    pub approach: Vec<String>,
    /// linear, mlp or attnpool; repeat or comma-separate for several.
    #[arg(long, value_name = "ARCH", value_delimiter = ',')]
    pub arch: Vec<String>,
    /// softmax or frequency.
    #[arg(long, value_name = "METHOD")]
    pub soft_method: Option<String>,
    /// Keep tie instances in soft-label training data.
    #[arg(long)]
    pub keep_ties: bool,
    /// Root seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Top-k size for attribution agreement: auto or a count.
    #[arg(long, value_name = "K")]
    pub k: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Directory written by `perspective train`.
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of lowest-confidence test instances to explain.
    #[arg(long, value_name = "N")]
    pub instances: Option<usize>,
    /// Methods to run (ig, conductance, lime, shap, attention).
    #[arg(long, value_name = "METHOD", value_delimiter = ',')]
    pub methods: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_name = "N")]
    pub n_instances: Option<usize>,
    /// Concentration of each instance's label distribution.
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, value_name = "N")]
    pub annotators: Option<usize>,
    #[arg(long, value_name = "N")]
    pub vocab_size: Option<usize>,
    #[arg(long, value_name = "N")]
    pub tokens_per_text: Option<usize>,
    /// Probability that a token is class-indicative.
    #[arg(long, value_name = "P")]
    pub signal_strength: Option<f64>,
    /// Comma-separated latent class prior.
    #[arg(long, value_name = "P", value_delimiter = ',')]
    pub class_prior: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// A report.json written by `perspective run`.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Formats to write: csv, markdown, html, json.
    #[arg(long, value_name = "FORMAT", value_delimiter = ',', default_value = "csv,markdown,html")]
    pub formats: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn infer_format(path: &Path) -> CorpusFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => CorpusFormat::CsvLong,
        _ => CorpusFormat::Jsonl,
    }
}

impl Overrides {
    /// The configured experiment with every given flag applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        self.apply(base)
    }

    pub fn apply(&self, mut config: ExperimentConfig) -> Result<ExperimentConfig> {
        let format = self.format.as_deref().map(str::parse::<CorpusFormat>).transpose()?;
        match (&self.corpus, &mut config.corpus) {
            (Some(path), current) => {
                let configured = match current {
                    CorpusSource::File { classes, .. } => Some(*classes),
                    CorpusSource::Synth(_) => None,
                };
                let classes = self.classes.or(configured).ok_or_else(|| {
                    Error::Validation("--classes is required when --corpus is given".into())
                })?;
                config.corpus = CorpusSource::File {
                    path: path.clone(),
                    format: format.unwrap_or_else(|| infer_format(path)),
                    classes,
                };
            }
            (None, CorpusSource::File { format: f, classes: c, .. }) => {
                if let Some(v) = format {
                    *f = v;
                }
                if let Some(v) = self.classes {
                    *c = v;
                }
            }
            (None, CorpusSource::Synth(spec)) => {
                if let Some(v) = self.classes {
                    spec.class_count = v;
                }
            }
        }
        if !self.approach.is_empty() {
            config.approaches = self.approach.iter().map(|a| a.parse()).collect::<Result<_>>()?;
        }
        if !self.arch.is_empty() {
            config.archs = self.arch.iter().map(|a| a.parse()).collect::<Result<_>>()?;
        }
        if let Some(m) = &self.soft_method {
            config.soft_method = m.parse()?;
        }
        if self.keep_ties {
            config.keep_ties = true;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(k) = &self.k {
            config.explain.config.k = k.parse()?;
        }
        if let Some(out) = &self.out {
            config.out_dir = Some(out.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

/// `--out`, else the configured output directory, else `fallback`.
pub fn out_dir(config: &ExperimentConfig, fallback: &str) -> PathBuf {
    config.out_dir.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

#[cfg(test)]
mod tests {
    use super::*;
    use perspective::harness::Approach;
    use perspective::model::Arch;

    #[test]
    fn flags_override_config_keys() {
        let o = Overrides {
            corpus: Some("votes.csv".into()),
            classes: Some(3),
            approach: vec!["multip".into()],
            arch: vec!["mlp".into(), "linear".into()],
            soft_method: Some("frequency".into()),
            keep_ties: true,
            seed: Some(9),
            k: Some("4".into()),
            ..Overrides::default()
        };
        let c = o.apply(ExperimentConfig::default()).unwrap();
        assert_eq!(
            c.corpus,
            CorpusSource::File {
                path: "votes.csv".into(),
                format: CorpusFormat::CsvLong,
                classes: 3
            }
        );
        assert_eq!(c.approaches, vec![Approach::Multip]);
        assert_eq!(c.archs, vec![Arch::Mlp, Arch::Linear]);
        assert!(c.keep_ties);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn bad_values_are_validation_errors() {
        for o in [
            Overrides {
                arch: vec!["cnn".into()],
                ..Overrides::default()
            },
            Overrides {
                corpus: Some("x.jsonl".into()),
                ..Overrides::default()
            },
            Overrides {
                k: Some("0".into()),
                ..Overrides::default()
            },
        ] {
            assert!(o.apply(ExperimentConfig::default()).unwrap_err().is_validation(), "{o:?}");
        }
    }
}
