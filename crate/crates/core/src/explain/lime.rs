//! Local surrogate explanations: token masking, a cosine-distance
//! exponential kernel, and weighted ridge regression.

use rand::Rng;

use crate::error::Result;
use crate::featurize::Featurizer;
use crate::math;
use crate::model::ClassifierModel;
use crate::seeding;

use super::{distinct_ids, probs_for_ids, Attribution, ExplainConfig, Method, Score, Unit};

const RIDGE: f64 = 1e-3;

/// LIME over the distinct in-vocabulary tokens of `text`, scoring the
/// target-class probability. Scores are [`Unit::Feature`] indexed by
/// vocabulary id.
pub fn lime_explain(
    model: &ClassifierModel,
    featurizer: &Featurizer,
    text: &str,
    target: usize,
    config: &ExplainConfig,
    stream_key: &str,
) -> Result<Attribution> {
    config.validate()?;
    let (ids, distinct) = distinct_ids(featurizer, text)?;
    let d = distinct.len();
    let width = config.lime_kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    let mut rng = seeding::stream(config.seed, &["lime", stream_key]);

    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(config.lime_samples);
    masks.push(vec![true; d]);
    while masks.len() < config.lime_samples {
        masks.push((0..d).map(|_| rng.random_bool(0.5)).collect());
    }

    // Normal equations for [intercept, coefficients].
    let n = d + 1;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut row = vec![0.0; n];
    for mask in &masks {
        let kept: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|id| mask[distinct.iter().position(|x| x == id).expect("distinct id")])
            .collect();
        let y = probs_for_ids(model, featurizer, &kept)?[target];
        let on = mask.iter().filter(|m| **m).count() as f64;
        let cos = if on == 0.0 { 0.0 } else { (on / d as f64).sqrt() };
        let weight = (-(1.0 - cos).powi(2) / (width * width)).exp();
        row[0] = 1.0;
        for (j, &m) in mask.iter().enumerate() {
            row[j + 1] = if m { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            b[i] += weight * row[i] * y;
            for j in 0..n {
                a[i * n + j] += weight * row[i] * row[j];
            }
        }
    }
    for j in 1..n {
        a[j * n + j] += RIDGE;
    }
    let solution = math::solve_spd(&a, &b)?;

    let scores = distinct
        .iter()
        .enumerate()
        .map(|(j, &id)| Score {
            index: id,
            display: featurizer.vocab.token(id).unwrap_or_default().to_string(),
            score: solution[j + 1],
        })
        .collect();
    Ok(Attribution::new(Method::Lime, Unit::Feature, target, scores)?
        .with_meta("samples", masks.len())
        .with_meta("kernel", "exp(-(1-cos)^2/w^2)")
        .with_meta("kernel_width", width)
        .with_meta("ridge", RIDGE)
        .with_meta("intercept", solution[0])
        .with_meta("seed", config.seed))
}
