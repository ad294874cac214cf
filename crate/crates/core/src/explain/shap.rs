//! KernelSHAP: Shapley-kernel weighted least squares with the efficiency
//! constraint enforced by eliminating one variable.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::featurize::Featurizer;
use crate::math;
use crate::model::ClassifierModel;
use crate::seeding;

use super::{
    distinct_ids, probs_for_ids, Attribution, ExplainConfig, Method, Score, ShapSamples, Unit,
    MAX_EXACT_SHAP_TOKENS,
};

/// Solution of a cooperative game over `d` players.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapGame {
    pub phi: Vec<f64>,
    /// Value of the empty coalition.
    pub base_value: f64,
    /// Value of the grand coalition.
    pub full_value: f64,
    /// Distinct coalitions evaluated, including the empty and full ones.
    pub evaluations: usize,
    pub exact: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` among `d` players.
pub fn shapley_kernel(d: usize, s: usize) -> f64 {
    (d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64)
}

/// KernelSHAP on an arbitrary value function over coalition masks.
pub fn kernel_shap_game<F>(d: usize, mut value: F, samples: ShapSamples, rng: &mut seeding::Rng) -> Result<ShapGame>
where
    F: FnMut(&[bool]) -> Result<f64>,
{
    if d == 0 {
        return Err(Error::Argument("KernelSHAP needs at least one token".into()));
    }
    let proper = if d < 63 { (1u64 << d) - 2 } else { u64::MAX };
    let exact = match samples {
        ShapSamples::Exact if d > MAX_EXACT_SHAP_TOKENS => {
            return Err(Error::Resource(format!(
                "exact KernelSHAP over {d} tokens needs 2^{d} evaluations; \
                 the limit is {MAX_EXACT_SHAP_TOKENS} tokens, use a sample count instead"
            )))
        }
        ShapSamples::Exact => true,
        ShapSamples::Sampled(n) => proper <= n as u64,
    };

    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    let mut eval = |mask: Vec<bool>, value: &mut F| -> Result<f64> {
        if let Some(v) = cache.get(&mask) {
            return Ok(*v);
        }
        let v = value(&mask)?;
        cache.insert(mask, v);
        Ok(v)
    };
    let base_value = eval(vec![false; d], &mut value)?;
    let full_value = eval(vec![true; d], &mut value)?;
    let delta = full_value - base_value;
    if d == 1 {
        return Ok(ShapGame {
            phi: vec![delta],
            base_value,
            full_value,
            evaluations: 2,
            exact: true,
        });
    }

    let mut coalitions: Vec<(Vec<bool>, f64)> = Vec::new();
    if exact {
        for bits in 1..(1u64 << d) - 1 {
            let mask: Vec<bool> = (0..d).map(|i| bits >> i & 1 == 1).collect();
            let s = bits.count_ones() as usize;
            coalitions.push((mask, shapley_kernel(d, s)));
        }
    } else {
        let ShapSamples::Sampled(n) = samples else { unreachable!() };
        // Sizes drawn in proportion to their total kernel mass, so every
        // sampled coalition carries equal weight.
        let size_mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
        let total: f64 = size_mass.iter().sum();
        for _ in 0..n {
            let mut u = rng.random::<f64>() * total;
            let mut s = d - 1;
            for (i, m) in size_mass.iter().enumerate() {
                if u < *m {
                    s = i + 1;
                    break;
                }
                u -= m;
            }
            let mut mask = vec![false; d];
            for i in index::sample(rng, d, s) {
                mask[i] = true;
            }
            coalitions.push((mask, 1.0));
        }
    }

    // Eliminate the last player: phi_last = delta - sum(others).
    let n = d - 1;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut x = vec![0.0; n];
    for (mask, w) in coalitions {
        let z_last = if mask[d - 1] { 1.0 } else { 0.0 };
        for i in 0..n {
            x[i] = (if mask[i] { 1.0 } else { 0.0 }) - z_last;
        }
        let y = eval(mask, &mut value)? - base_value - z_last * delta;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            b[i] += w * x[i] * y;
            for j in 0..n {
                a[i * n + j] += w * x[i] * x[j];
            }
        }
    }
    let mut phi = math::solve_spd(&a, &b)
        .map_err(|e| e.context("KernelSHAP system is singular; increase the sample count"))?;
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(ShapGame {
        phi,
        base_value,
        full_value,
        evaluations: cache.len(),
        exact,
    })
}

/// KernelSHAP over the distinct in-vocabulary tokens of `text`. Absent
/// tokens are removed before featurization, so the base value is the
/// model's output on the empty text.
pub fn kernel_shap(
    model: &ClassifierModel,
    featurizer: &Featurizer,
    text: &str,
    target: usize,
    config: &ExplainConfig,
    stream_key: &str,
) -> Result<Attribution> {
    let (ids, distinct) = distinct_ids(featurizer, text)?;
    let mut rng = seeding::stream(config.seed, &["shap", stream_key]);
    let game = kernel_shap_game(
        distinct.len(),
        |mask| {
            let kept: Vec<usize> = ids
                .iter()
                .copied()
                .filter(|id| mask[distinct.iter().position(|x| x == id).expect("distinct id")])
                .collect();
            Ok(probs_for_ids(model, featurizer, &kept)?[target])
        },
        config.shap_samples,
        &mut rng,
    )?;
    let scores = distinct
        .iter()
        .zip(&game.phi)
        .map(|(&id, &phi)| Score {
            index: id,
            display: featurizer.vocab.token(id).unwrap_or_default().to_string(),
            score: phi,
        })
        .collect();
    Ok(Attribution::new(Method::Shap, Unit::Feature, target, scores)?
        .with_meta("base_value", game.base_value)
        .with_meta("base", "empty text")
        .with_meta("full_value", game.full_value)
        .with_meta("evaluations", game.evaluations)
        .with_meta("exact", game.exact)
        .with_meta("seed", config.seed))
}
