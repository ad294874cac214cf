//! Integrated gradients and layer conductance along the straight-line path
//! from a baseline to the input, using a midpoint Riemann sum.

use crate::error::{Error, Result};
use crate::model::{ClassifierModel, InputGradient, ModelInput};

use super::{Attribution, Method, Score, Unit};

/// Resolved input and baseline on the first differentiable representation.
enum Path {
    Vector { x: Vec<f64>, base: Vec<f64> },
    Embedded { x: Vec<Vec<f64>>, base: Vec<Vec<f64>> },
}

impl Path {
    fn resolve(model: &ClassifierModel, input: ModelInput<'_>, baseline: Option<ModelInput<'_>>) -> Result<Self> {
        let embedded = |m: ModelInput<'_>| -> Result<Option<Vec<Vec<f64>>>> {
            Ok(match m {
                ModelInput::Tokens(ids) => Some(model.embed(ids)?),
                ModelInput::Embedded(rows) => Some(rows.to_vec()),
                ModelInput::Vector(_) => None,
            })
        };
        match (input, embedded(input)?) {
            (ModelInput::Vector(x), _) => {
                let base = match baseline {
                    None => vec![0.0; x.len()],
                    Some(ModelInput::Vector(b)) if b.len() == x.len() => b.to_vec(),
                    Some(_) => return Err(Error::Argument("baseline shape differs from input".into())),
                };
                Ok(Path::Vector { x: x.to_vec(), base })
            }
            (_, Some(x)) => {
                let base = match baseline {
                    None => x.iter().map(|r| vec![0.0; r.len()]).collect(),
                    Some(b) => match embedded(b)? {
                        Some(rows)
                            if rows.len() == x.len()
                                && rows.iter().zip(&x).all(|(a, b)| a.len() == b.len()) =>
                        {
                            rows
                        }
                        _ => return Err(Error::Argument("baseline shape differs from input".into())),
                    },
                };
                Ok(Path::Embedded { x, base })
            }
            _ => unreachable!("non-vector inputs embed"),
        }
    }

    fn vector_point(x: &[f64], base: &[f64], a: f64) -> Vec<f64> {
        x.iter().zip(base).map(|(xi, bi)| bi + a * (xi - bi)).collect()
    }

    fn embedded_point(x: &[Vec<f64>], base: &[Vec<f64>], a: f64) -> Vec<Vec<f64>> {
        x.iter()
            .zip(base)
            .map(|(xr, br)| Self::vector_point(xr, br, a))
            .collect()
    }

    fn endpoint_gap(&self, model: &ClassifierModel, target: usize) -> Result<f64> {
        let (fx, fb) = match self {
            Path::Vector { x, base } => (
                model.logits(ModelInput::Vector(x))?,
                model.logits(ModelInput::Vector(base))?,
            ),
            Path::Embedded { x, base } => (
                model.logits(ModelInput::Embedded(x))?,
                model.logits(ModelInput::Embedded(base))?,
            ),
        };
        Ok(fx[target] - fb[target])
    }
}

fn check(model: &ClassifierModel, target: usize, m: usize) -> Result<()> {
    if target >= model.class_count() {
        return Err(Error::Argument(format!(
            "target class {target} outside [0, {})",
            model.class_count()
        )));
    }
    if m < 1 {
        return Err(Error::Argument("step count must be >= 1".into()));
    }
    Ok(())
}

fn alpha(t: usize, m: usize) -> f64 {
    (t as f64 + 0.5) / m as f64
}

/// Integrated gradients of the target-class logit. Vector inputs yield one
/// [`Unit::Feature`] score per dimension where input and baseline differ;
/// token inputs yield one [`Unit::Token`] score per position, summed over
/// embedding dimensions. The default baseline is all zeros.
pub fn integrated_gradients(
    model: &ClassifierModel,
    input: ModelInput<'_>,
    baseline: Option<ModelInput<'_>>,
    target: usize,
    m: usize,
) -> Result<Attribution> {
    check(model, target, m)?;
    let path = Path::resolve(model, input, baseline)?;
    let mut seed = vec![0.0; model.class_count()];
    seed[target] = 1.0;

    let (unit, scores) = match &path {
        Path::Vector { x, base } => {
            let mut sum = vec![0.0; x.len()];
            for t in 0..m {
                let p = Path::vector_point(x, base, alpha(t, m));
                let (_, cache) = model.forward(ModelInput::Vector(&p))?;
                match model.backward(&cache, &seed, true)?.input {
                    Some(InputGradient::Vector(g)) => sum.iter_mut().zip(g).for_each(|(s, g)| *s += g),
                    _ => unreachable!("vector input gradient"),
                }
            }
            let scores = (0..x.len())
                .filter(|&i| x[i] != base[i])
                .map(|i| Score {
                    index: i,
                    display: String::new(),
                    score: (x[i] - base[i]) * (sum[i] / m as f64),
                })
                .collect();
            (Unit::Feature, scores)
        }
        Path::Embedded { x, base } => {
            let mut sum: Vec<Vec<f64>> = x.iter().map(|r| vec![0.0; r.len()]).collect();
            for t in 0..m {
                let p = Path::embedded_point(x, base, alpha(t, m));
                let (_, cache) = model.forward(ModelInput::Embedded(&p))?;
                match model.backward(&cache, &seed, true)?.input {
                    Some(InputGradient::Embedded(g)) => {
                        for (srow, grow) in sum.iter_mut().zip(g) {
                            srow.iter_mut().zip(grow).for_each(|(s, g)| *s += g);
                        }
                    }
                    _ => unreachable!("embedded input gradient"),
                }
            }
            let scores = (0..x.len())
                .map(|p| Score {
                    index: p,
                    display: String::new(),
                    score: (0..x[p].len())
                        .map(|k| (x[p][k] - base[p][k]) * (sum[p][k] / m as f64))
                        .sum(),
                })
                .collect();
            (Unit::Token, scores)
        }
    };

    let gap = path.endpoint_gap(model, target)?;
    let attr = Attribution::new(Method::Ig, unit, target, scores)?;
    let residual = (attr.total() - gap).abs();
    Ok(attr
        .with_meta("steps", m)
        .with_meta("baseline", if baseline.is_some() { "custom" } else { "zero" })
        .with_meta("output_gap", gap)
        .with_meta("completeness_residual", residual))
}

/// Conductance of every hidden unit (MLP activations or the pooled
/// embedding) for the target-class logit.
pub fn layer_conductance(
    model: &ClassifierModel,
    input: ModelInput<'_>,
    baseline: Option<ModelInput<'_>>,
    target: usize,
    m: usize,
) -> Result<Attribution> {
    check(model, target, m)?;
    let h = model.hidden_width()?;
    let weights = model.hidden_logit_weights(target)?;
    let path = Path::resolve(model, input, baseline)?;
    let mut sum = vec![0.0; h];
    for t in 0..m {
        let a = alpha(t, m);
        let tangent = match &path {
            Path::Vector { x, base } => {
                let p = Path::vector_point(x, base, a);
                let dir: Vec<f64> = x.iter().zip(base).map(|(xi, bi)| xi - bi).collect();
                model.hidden_tangent(ModelInput::Vector(&p), ModelInput::Vector(&dir))?
            }
            Path::Embedded { x, base } => {
                let p = Path::embedded_point(x, base, a);
                let dir: Vec<Vec<f64>> = x
                    .iter()
                    .zip(base)
                    .map(|(xr, br)| xr.iter().zip(br).map(|(xi, bi)| xi - bi).collect())
                    .collect();
                model.hidden_tangent(ModelInput::Embedded(&p), ModelInput::Embedded(&dir))?
            }
        };
        sum.iter_mut().zip(tangent).for_each(|(s, d)| *s += d);
    }
    let scores = (0..h)
        .map(|j| Score {
            index: j,
            display: format!("h{j}"),
            score: weights[j] * sum[j] / m as f64,
        })
        .collect();
    let gap = path.endpoint_gap(model, target)?;
    let attr = Attribution::new(Method::Conductance, Unit::Neuron, target, scores)?;
    let residual = (attr.total() - gap).abs();
    Ok(attr
        .with_meta("steps", m)
        .with_meta("baseline", if baseline.is_some() { "custom" } else { "zero" })
        .with_meta("output_gap", gap)
        .with_meta("completeness_residual", residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, ModelSpec};

    fn model(arch: Arch, d: usize, h: usize, seed: u64) -> ClassifierModel {
        ClassifierModel::init(ModelSpec {
            arch,
            input_dim: d,
            hidden_dim: h,
            class_count: 3,
            seed,
        })
        .unwrap()
    }

    fn residual(a: &Attribution) -> f64 {
        a.metadata["completeness_residual"].as_f64().unwrap()
    }

    #[test]
    fn linear_ig_is_closed_form() {
        let m = model(Arch::Linear, 4, 1, 1);
        let x = [0.3, -1.2, 0.0, 2.0];
        let w = m.segment("w")[4..8].to_vec();
        for steps in [1, 2, 7, 200] {
            let a = integrated_gradients(&m, ModelInput::Vector(&x), None, 1, steps).unwrap();
            for s in &a.scores {
                assert!((s.score - w[s.index] * x[s.index]).abs() < 1e-12);
            }
            // zero inputs equal the baseline and are omitted
            assert!(a.score_of(2).is_none());
        }
    }

    #[test]
    fn input_equal_to_baseline_gives_zero() {
        let m = model(Arch::Mlp, 3, 5, 2);
        let x = [0.4, 0.1, -0.7];
        let a = integrated_gradients(&m, ModelInput::Vector(&x), Some(ModelInput::Vector(&x)), 0, 10).unwrap();
        assert!(a.scores.is_empty());
        let c = layer_conductance(&m, ModelInput::Vector(&x), Some(ModelInput::Vector(&x)), 0, 10).unwrap();
        assert!(c.scores.iter().all(|s| s.score == 0.0));
        let p = model(Arch::AttnPool, 6, 4, 2);
        let rows = p.embed(&[1, 2]).unwrap();
        let a = integrated_gradients(&p, ModelInput::Embedded(&rows), Some(ModelInput::Embedded(&rows)), 0, 10)
            .unwrap();
        assert!(a.scores.iter().all(|s| s.score == 0.0));
    }

    #[test]
    fn completeness_on_layered_models() {
        let m = model(Arch::Mlp, 6, 8, 5);
        let x = [0.5, -0.2, 0.9, 0.0, 0.3, -1.0];
        let a = integrated_gradients(&m, ModelInput::Vector(&x), None, 2, 200).unwrap();
        assert!(residual(&a) < 1e-3);
        let c = layer_conductance(&m, ModelInput::Vector(&x), None, 2, 200).unwrap();
        assert!(residual(&c) < 1e-3);

        let p = model(Arch::AttnPool, 10, 4, 5);
        let ids = [3, 1, 4, 1, 5];
        let a = integrated_gradients(&p, ModelInput::Tokens(&ids), None, 0, 200).unwrap();
        assert_eq!(a.unit, Unit::Token);
        assert_eq!(a.scores.len(), ids.len());
        assert!(residual(&a) < 1e-3);
        let c = layer_conductance(&p, ModelInput::Tokens(&ids), None, 0, 200).unwrap();
        assert!(residual(&c) < 1e-3);
    }

    #[test]
    fn dead_neuron_has_zero_conductance() {
        let mut m = model(Arch::Mlp, 3, 4, 9);
        let h = 4;
        let w2 = m.segment_mut("w2");
        for c in 0..3 {
            w2[c * h + 2] = 0.0;
        }
        let c = layer_conductance(&m, ModelInput::Vector(&[1.0, 2.0, -0.5]), None, 1, 50).unwrap();
        assert_eq!(c.score_of(2), Some(0.0));
    }

    #[test]
    fn errors() {
        let lin = model(Arch::Linear, 3, 1, 0);
        assert!(matches!(
            layer_conductance(&lin, ModelInput::Vector(&[1.0, 0.0, 0.0]), None, 0, 10),
            Err(Error::UnsupportedArchitecture(_))
        ));
        assert!(matches!(
            integrated_gradients(&lin, ModelInput::Vector(&[1.0, 0.0, 0.0]), Some(ModelInput::Vector(&[0.0])), 0, 10),
            Err(Error::Argument(_))
        ));
        assert!(integrated_gradients(&lin, ModelInput::Vector(&[1.0, 0.0, 0.0]), None, 3, 10).is_err());
    }
}
