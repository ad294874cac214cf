//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use perspective::math::softmax;
use perspective::model::{Arch, ClassifierModel, InputGradient, ModelInput, ModelSpec};
use perspective::seeding;
use perspective::train::soft_loss;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Pre-activation margin enforced on mlp instances so that no ReLU kink lies
/// within a finite-difference step.
pub const RELU_MARGIN: f64 = 0.05;

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps gradients that are zero
/// up to rounding from dividing by rounding noise.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub instances: usize,
    pub param_entries: usize,
    pub input_entries: usize,
    pub max_param_rel: f64,
    pub max_input_rel: f64,
}

enum Input {
    Vector(Vec<f64>),
    Tokens(Vec<usize>),
}

fn random_target(rng: &mut seeding::Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn loss_at(model: &ClassifierModel, input: ModelInput<'_>, target: &[f64]) -> f64 {
    soft_loss(&model.logits(input).expect("forward"), target).0
}

/// One random model, input and soft target for `arch`. Mlp biases are
/// shifted so that every pre-activation is at least `RELU_MARGIN` from 0.
fn instance(arch: Arch, i: usize) -> (ClassifierModel, Input, Vec<f64>) {
    let mut rng = seeding::stream(i as u64, &["gradcheck", &arch.to_string()]);
    let (d, h, c) = match arch {
        Arch::Linear => (9, 1, 3),
        Arch::Mlp => (9, 7, 3),
        Arch::AttnPool => (12, 5, 3),
    };
    let spec = ModelSpec {
        arch,
        input_dim: d,
        hidden_dim: h,
        class_count: c,
        seed: i as u64,
    };
    let mut model = ClassifierModel::init(spec).expect("init");
    // random rather than zero biases so bias gradients are exercised fully
    for name in ["b", "b1", "b2"] {
        if spec.segments().iter().any(|(n, _)| *n == name) {
            for v in model.segment_mut(name) {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let input = match arch {
        Arch::AttnPool => {
            let len = rng.random_range(1..=8);
            Input::Tokens((0..len).map(|_| rng.random_range(0..d)).collect())
        }
        _ => Input::Vector((0..d).map(|_| rng.random_range(-1.5..1.5)).collect()),
    };
    if arch == Arch::Mlp {
        if let Input::Vector(x) = &input {
            let (_, cache) = model.forward(ModelInput::Vector(x)).expect("forward");
            let pre = cache.pre_activations().expect("mlp").to_vec();
            let b1 = model.segment_mut("b1");
            for (b, p) in b1.iter_mut().zip(pre) {
                if p.abs() < RELU_MARGIN {
                    *b += if p >= 0.0 { RELU_MARGIN } else { -RELU_MARGIN };
                }
            }
        }
    }
    let target = random_target(&mut rng, c);
    (model, input, target)
}

/// Central-difference check of parameter and input gradients of the soft
/// loss on `n` random instances.
pub fn gradient_check(arch: Arch, n: usize) -> GradCheck {
    let mut out = GradCheck::default();
    for i in 0..n {
        let (model, input, target) = instance(arch, i);
        let mi = match &input {
            Input::Vector(x) => ModelInput::Vector(x),
            Input::Tokens(t) => ModelInput::Tokens(t),
        };
        let (logits, cache) = model.forward(mi).expect("forward");
        let (_, d_logits) = soft_loss(&logits, &target);
        let grads = model.backward(&cache, &d_logits, true).expect("backward");

        let mut probe = model.clone();
        for k in 0..model.params().len() {
            let orig = probe.params()[k];
            probe.params_mut()[k] = orig + FD_STEP;
            let up = loss_at(&probe, mi, &target);
            probe.params_mut()[k] = orig - FD_STEP;
            let down = loss_at(&probe, mi, &target);
            probe.params_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            out.max_param_rel = out.max_param_rel.max(rel_err(grads.params[k], numeric));
            out.param_entries += 1;
        }

        match (&input, grads.input.expect("input gradient")) {
            (Input::Vector(x), InputGradient::Vector(g)) => {
                let mut xp = x.clone();
                for j in 0..x.len() {
                    xp[j] = x[j] + FD_STEP;
                    let up = loss_at(&model, ModelInput::Vector(&xp), &target);
                    xp[j] = x[j] - FD_STEP;
                    let down = loss_at(&model, ModelInput::Vector(&xp), &target);
                    xp[j] = x[j];
                    let numeric = (up - down) / (2.0 * FD_STEP);
                    out.max_input_rel = out.max_input_rel.max(rel_err(g[j], numeric));
                    out.input_entries += 1;
                }
            }
            (Input::Tokens(ids), InputGradient::Embedded(g)) => {
                let rows = model.embed(ids).expect("embed");
                let mut rp = rows.clone();
                for t in 0..rows.len() {
                    for j in 0..rows[t].len() {
                        rp[t][j] = rows[t][j] + FD_STEP;
                        let up = loss_at(&model, ModelInput::Embedded(&rp), &target);
                        rp[t][j] = rows[t][j] - FD_STEP;
                        let down = loss_at(&model, ModelInput::Embedded(&rp), &target);
                        rp[t][j] = rows[t][j];
                        let numeric = (up - down) / (2.0 * FD_STEP);
                        out.max_input_rel = out.max_input_rel.max(rel_err(g[t][j], numeric));
                        out.input_entries += 1;
                    }
                }
            }
            _ => panic!("{arch}: input gradient has the wrong shape"),
        }
        out.instances += 1;
    }
    out
}

/// Shapley values by enumerating all `d!` orderings.
pub fn permutation_shapley(d: usize, value: &dyn Fn(&[bool]) -> f64) -> Vec<f64> {
    fn permute(order: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == order.len() {
            visit(order);
            return;
        }
        for i in k..order.len() {
            order.swap(k, i);
            permute(order, k + 1, visit);
            order.swap(k, i);
        }
    }
    let mut phi = vec![0.0; d];
    let mut count = 0usize;
    let mut order: Vec<usize> = (0..d).collect();
    permute(&mut order, 0, &mut |perm| {
        let mut mask = vec![false; d];
        let mut prev = value(&mask);
        for &p in perm {
            mask[p] = true;
            let next = value(&mask);
            phi[p] += next - prev;
            prev = next;
        }
        count += 1;
    });
    phi.iter().map(|v| v / count as f64).collect()
}

pub fn softmax_at(logits: &[f64], target: usize) -> f64 {
    softmax(logits)[target]
}
