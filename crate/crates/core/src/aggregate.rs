//! Hard (majority) and soft (distributional) labels, and disagreement.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationCorpus;
use crate::error::{Error, Result};
use crate::math;

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over classes. Used for human soft labels and for
/// model output distributions alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("empty distribution".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation(format!(
                "distribution entries must lie in [0, 1]: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn one_hot(class: usize, class_count: usize) -> Self {
        let mut probs = vec![0.0; class_count];
        probs[class] = 1.0;
        Self(probs)
    }

    pub fn uniform(class_count: usize) -> Self {
        Self(vec![1.0 / class_count as f64; class_count])
    }

    /// Softmax of logits. Always a valid distribution for finite input.
    pub fn from_logits(logits: &[f64]) -> Self {
        Self(math::softmax(logits))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    /// Most probable class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        math::argmax(&self.0)
    }

    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Arithmetic mean of equally-sized distributions.
    pub fn mean(dists: &[LabelDistribution]) -> Result<Self> {
        let first = dists
            .first()
            .ok_or_else(|| Error::Argument("mean of zero distributions".into()))?;
        let k = first.class_count();
        let mut acc = vec![0.0; k];
        for d in dists {
            if d.class_count() != k {
                return Err(Error::Argument("distributions differ in length".into()));
            }
            for (a, p) in acc.iter_mut().zip(d.probs()) {
                *a += p;
            }
        }
        let n = dists.len() as f64;
        Ok(Self(acc.into_iter().map(|a| a / n).collect()))
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.0
    }
}

/// Per-class vote counts.
pub fn count_votes(votes: &[usize], class_count: usize) -> Result<Vec<usize>> {
    if votes.is_empty() {
        return Err(Error::Argument("no votes".into()));
    }
    let mut counts = vec![0usize; class_count];
    for &v in votes {
        if v >= class_count {
            return Err(Error::Argument(format!(
                "vote {v} outside [0, {class_count})"
            )));
        }
        counts[v] += 1;
    }
    Ok(counts)
}

/// The unique most frequent label, or `None` when two or more classes tie
/// for the maximum count.
pub fn majority_label(votes: &[usize], class_count: usize) -> Result<Option<usize>> {
    let counts = count_votes(votes, class_count)?;
    let max = *counts.iter().max().expect("class_count >= 1");
    let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == max);
    let (first, _) = winners.next().expect("max is attained");
    Ok(if winners.next().is_some() {
        None
    } else {
        Some(first)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftLabelMethod {
    /// Softmax (natural exponent) of the raw per-class count vector.
    #[default]
    #[serde(alias = "softmax")]
    SoftmaxCounts,
    /// Counts divided by the number of votes.
    Frequency,
}

impl fmt::Display for SoftLabelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SoftmaxCounts => "softmax_counts",
            Self::Frequency => "frequency",
        })
    }
}

impl FromStr for SoftLabelMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" | "softmax_counts" => Ok(Self::SoftmaxCounts),
            "frequency" => Ok(Self::Frequency),
            other => Err(Error::Argument(format!("unknown soft-label method {other:?}"))),
        }
    }
}

pub fn soft_label(
    votes: &[usize],
    class_count: usize,
    method: SoftLabelMethod,
) -> Result<LabelDistribution> {
    let counts = count_votes(votes, class_count)?;
    let probs = match method {
        SoftLabelMethod::SoftmaxCounts => {
            let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            math::softmax(&as_f)
        }
        SoftLabelMethod::Frequency => {
            let n = votes.len() as f64;
            counts.iter().map(|&c| c as f64 / n).collect()
        }
    };
    Ok(LabelDistribution(probs))
}

/// Fraction of strict-majority instances with at least one vote different
/// from the majority label. Tie instances are left out entirely.
pub fn disagreement_rate(corpus: &AnnotationCorpus) -> Result<f64> {
    let k = corpus.class_count();
    let mut with_majority = 0usize;
    let mut dissenting = 0usize;
    for inst in corpus.instances() {
        let votes = inst.votes();
        if let Some(m) = majority_label(&votes, k)? {
            with_majority += 1;
            if votes.iter().any(|&v| v != m) {
                dissenting += 1;
            }
        }
    }
    if with_majority == 0 {
        return Err(Error::UndefinedRate(
            "corpus has no instance with a strict majority".into(),
        ));
    }
    Ok(dissenting as f64 / with_majority as f64)
}

/// Annotation-level reading of disagreement: dissenting annotations over all
/// annotations of strict-majority instances.
pub fn annotation_disagreement_rate(corpus: &AnnotationCorpus) -> Result<f64> {
    let k = corpus.class_count();
    let mut total = 0usize;
    let mut dissenting = 0usize;
    for inst in corpus.instances() {
        let votes = inst.votes();
        if let Some(m) = majority_label(&votes, k)? {
            total += votes.len();
            dissenting += votes.iter().filter(|&&v| v != m).count();
        }
    }
    if total == 0 {
        return Err(Error::UndefinedRate(
            "corpus has no instance with a strict majority".into(),
        ));
    }
    Ok(dissenting as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardItem {
    pub id: String,
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftItem {
    pub id: String,
    pub text: String,
    pub target: LabelDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardLabelDataset {
    pub class_count: usize,
    pub items: Vec<HardItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelDataset {
    pub class_count: usize,
    pub method: SoftLabelMethod,
    pub items: Vec<SoftItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationScheme {
    HardMajority,
    Soft(SoftLabelMethod),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggregatedDataset {
    Hard(HardLabelDataset),
    Soft(SoftLabelDataset),
}

impl AggregatedDataset {
    pub fn len(&self) -> usize {
        match self {
            Self::Hard(d) => d.items.len(),
            Self::Soft(d) => d.items.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Collapses a corpus into a training dataset. Hard aggregation always drops
/// tie instances; soft aggregation drops them unless `keep_ties` is set.
pub fn aggregate_corpus(
    corpus: &AnnotationCorpus,
    scheme: AggregationScheme,
    keep_ties: bool,
) -> Result<AggregatedDataset> {
    let out = match scheme {
        AggregationScheme::HardMajority => AggregatedDataset::Hard(hard_dataset(corpus)?),
        AggregationScheme::Soft(method) => {
            AggregatedDataset::Soft(soft_dataset(corpus, method, keep_ties)?)
        }
    };
    Ok(out)
}

pub fn hard_dataset(corpus: &AnnotationCorpus) -> Result<HardLabelDataset> {
    let k = corpus.class_count();
    let mut items = Vec::new();
    for inst in corpus.instances() {
        if let Some(label) = majority_label(&inst.votes(), k)? {
            items.push(HardItem {
                id: inst.id.clone(),
                text: inst.text.clone(),
                label,
            });
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(
            "no instance has a strict majority label".into(),
        ));
    }
    Ok(HardLabelDataset {
        class_count: k,
        items,
    })
}

pub fn soft_dataset(
    corpus: &AnnotationCorpus,
    method: SoftLabelMethod,
    keep_ties: bool,
) -> Result<SoftLabelDataset> {
    let k = corpus.class_count();
    let mut items = Vec::new();
    for inst in corpus.instances() {
        let votes = inst.votes();
        if !keep_ties && majority_label(&votes, k)?.is_none() {
            continue;
        }
        items.push(SoftItem {
            id: inst.id.clone(),
            text: inst.text.clone(),
            target: soft_label(&votes, k, method)?,
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(
            "soft aggregation left no instances".into(),
        ));
    }
    Ok(SoftLabelDataset {
        class_count: k,
        method,
        items,
    })
}

fn write_lines<W: Write, T: Serialize>(items: &[T], mut writer: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<jsonl output>", e))?;
    }
    Ok(())
}

fn read_lines<R: BufRead, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl HardLabelDataset {
    /// `{"id","text","label"}` per line.
    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        write_lines(&self.items, writer)
    }

    pub fn read_jsonl<R: BufRead>(reader: R, class_count: usize) -> Result<Self> {
        let items: Vec<HardItem> = read_lines(reader)?;
        if let Some(bad) = items.iter().find(|i| i.label >= class_count) {
            return Err(Error::Validation(format!(
                "item {:?}: label {} outside [0, {class_count})",
                bad.id, bad.label
            )));
        }
        Ok(Self { class_count, items })
    }
}

impl SoftLabelDataset {
    /// `{"id","text","target":[...]}` per line.
    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        write_lines(&self.items, writer)
    }

    pub fn read_jsonl<R: BufRead>(
        reader: R,
        class_count: usize,
        method: SoftLabelMethod,
    ) -> Result<Self> {
        let items: Vec<SoftItem> = read_lines(reader)?;
        if let Some(bad) = items.iter().find(|i| i.target.class_count() != class_count) {
            return Err(Error::Validation(format!(
                "item {:?}: target has {} classes, expected {class_count}",
                bad.id,
                bad.target.class_count()
            )));
        }
        Ok(Self {
            class_count,
            method,
            items,
        })
    }
}
