//! Hard metrics, confidence and Jensen-Shannon divergence.

use serde::{Deserialize, Serialize};

use crate::aggregate::LabelDistribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mean_confidence: f64,
    pub mean_jsd: f64,
    pub n_instances: usize,
}

pub const CSV_HEADER: &str = "approach,arch,accuracy,macro_f1,mean_confidence,mean_jsd,n";

impl EvalResult {
    pub fn csv_row(&self, approach: &str, arch: &str) -> String {
        format!(
            "{approach},{arch},{:.6},{:.6},{:.6},{:.6},{}",
            self.accuracy, self.macro_f1, self.mean_confidence, self.mean_jsd, self.n_instances
        )
    }
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Argument(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::Argument("cannot score an empty list".into()));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_aligned(preds.len(), golds.len())?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1 over every class, including classes that
/// are never predicted and never gold (they score 0).
pub fn macro_f1(preds: &[usize], golds: &[usize], class_count: usize) -> Result<f64> {
    check_aligned(preds.len(), golds.len())?;
    if class_count == 0 {
        return Err(Error::Argument("class_count must be >= 1".into()));
    }
    let mut tp = vec![0usize; class_count];
    let mut predicted = vec![0usize; class_count];
    let mut actual = vec![0usize; class_count];
    for (&p, &g) in preds.iter().zip(golds) {
        if p >= class_count || g >= class_count {
            return Err(Error::Argument(format!(
                "label out of range for {class_count} classes"
            )));
        }
        predicted[p] += 1;
        actual[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let total: f64 = (0..class_count)
        .map(|c| {
            let p = ratio(tp[c], predicted[c]);
            let r = ratio(tp[c], actual[c]);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum();
    Ok(total / class_count as f64)
}

pub fn confidence(dist: &LabelDistribution) -> f64 {
    dist.max_prob()
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Jensen-Shannon divergence with base-2 logarithms, so the result is in [0, 1].
pub fn jsd(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    let (p, q) = (p.probs(), q.probs());
    if p.len() != q.len() {
        return Err(Error::Argument(format!(
            "distribution length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let term = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
        total += term(a) + term(b);
    }
    Ok((0.5 * total).clamp(0.0, 1.0))
}

pub fn evaluate(
    pred_labels: &[usize],
    pred_dists: &[LabelDistribution],
    gold_labels: &[usize],
    gold_dists: &[LabelDistribution],
    class_count: usize,
) -> Result<EvalResult> {
    check_aligned(pred_labels.len(), gold_labels.len())?;
    check_aligned(pred_labels.len(), pred_dists.len())?;
    check_aligned(pred_labels.len(), gold_dists.len())?;
    let n = pred_labels.len();
    let mut conf = 0.0;
    let mut div = 0.0;
    for (p, g) in pred_dists.iter().zip(gold_dists) {
        conf += confidence(p);
        div += jsd(p, g)?;
    }
    Ok(EvalResult {
        accuracy: accuracy(pred_labels, gold_labels)?,
        macro_f1: macro_f1(pred_labels, gold_labels, class_count)?,
        mean_confidence: conf / n as f64,
        mean_jsd: div / n as f64,
        n_instances: n,
    })
}
