//! Synthetic disaggregated corpora with controllable disagreement.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, AnnotationCorpus, Instance};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_instances: usize,
    pub class_count: usize,
    pub annotators_per_instance: usize,
    /// Concentration of each instance's label distribution around its latent
    /// class. Small values give heavy disagreement, large values near-unanimity.
    pub dirichlet_alpha: f64,
    pub vocab_size: usize,
    pub tokens_per_text: usize,
    /// Probability that a token is class-indicative rather than noise.
    pub signal_strength: f64,
    pub seed: u64,
    /// Latent class prior; uniform when absent.
    pub class_prior: Option<Vec<f64>>,
    /// Size of the annotator pool; defaults to `annotators_per_instance`,
    /// so every annotator labels every instance.
    pub annotator_pool: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_instances: 1000,
            class_count: 2,
            annotators_per_instance: 5,
            dirichlet_alpha: 0.5,
            vocab_size: 200,
            tokens_per_text: 12,
            signal_strength: 0.5,
            seed: 0,
            class_prior: None,
            annotator_pool: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.n_instances < 1 || self.tokens_per_text < 1 || self.annotators_per_instance < 1 {
            return bad("n_instances, tokens_per_text and annotators_per_instance must be >= 1".into());
        }
        if self.class_count < 2 {
            return bad(format!("class_count must be >= 2, got {}", self.class_count));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return bad(format!("dirichlet_alpha must be positive, got {}", self.dirichlet_alpha));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad(format!("signal_strength must be in [0, 1], got {}", self.signal_strength));
        }
        if self.vocab_size < 2 * self.class_count {
            return bad(format!(
                "vocab_size must be at least {} for {} classes",
                2 * self.class_count,
                self.class_count
            ));
        }
        if let Some(prior) = &self.class_prior {
            let sum: f64 = prior.iter().sum();
            if prior.len() != self.class_count || prior.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return bad(format!("class_prior must be a distribution over {} classes", self.class_count));
            }
        }
        if self.pool() < self.annotators_per_instance {
            return bad("annotator_pool must be >= annotators_per_instance".into());
        }
        Ok(())
    }

    fn pool(&self) -> usize {
        self.annotator_pool.unwrap_or(self.annotators_per_instance)
    }

    fn tokens_per_class(&self) -> usize {
        (self.vocab_size / (2 * self.class_count)).max(1)
    }
}

fn sample_categorical(rng: &mut seeding::Rng, probs: &[f64]) -> usize {
    let mut u = rng.random::<f64>() * probs.iter().sum::<f64>();
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Generates a corpus instance by instance:
///
/// 1. latent class `c` from the class prior;
/// 2. label distribution `π ~ Dirichlet(1 + α·e_c)`;
/// 3. each token is, with probability `signal_strength`, an indicative token
///    of a class drawn from `π`, otherwise a noise token;
/// 4. each annotator draws a label i.i.d. from `π`.
pub fn synth_corpus(spec: &SynthSpec) -> Result<AnnotationCorpus> {
    spec.validate()?;
    let k = spec.class_count;
    let per_class = spec.tokens_per_class();
    let noise = spec.vocab_size - k * per_class;
    let prior = spec.class_prior.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]);
    let unit = Gamma::new(1.0, 1.0).expect("valid gamma");
    let peak = Gamma::new(1.0 + spec.dirichlet_alpha, 1.0)
        .map_err(|e| Error::Argument(format!("dirichlet_alpha: {e}")))?;
    let mut rng = seeding::stream(spec.seed, &["synth"]);

    let mut instances = Vec::with_capacity(spec.n_instances);
    for i in 0..spec.n_instances {
        let latent = sample_categorical(&mut rng, &prior);
        let mut pi: Vec<f64> = (0..k)
            .map(|c| if c == latent { peak.sample(&mut rng) } else { unit.sample(&mut rng) })
            .collect();
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);

        let words: Vec<String> = (0..spec.tokens_per_text)
            .map(|_| {
                if rng.random::<f64>() < spec.signal_strength {
                    let c = sample_categorical(&mut rng, &pi);
                    format!("c{c}w{}", rng.random_range(0..per_class))
                } else {
                    format!("n{}", rng.random_range(0..noise.max(1)))
                }
            })
            .collect();

        let mut chosen: Vec<usize> = index::sample(&mut rng, spec.pool(), spec.annotators_per_instance).into_vec();
        chosen.sort_unstable();
        let annotations = chosen
            .into_iter()
            .map(|a| Annotation {
                annotator: format!("a{a}"),
                label: sample_categorical(&mut rng, &pi),
            })
            .collect();

        instances.push(Instance {
            id: format!("s{i:05}"),
            text: words.join(" "),
            annotations,
        });
    }
    AnnotationCorpus::new(instances, k)
}
