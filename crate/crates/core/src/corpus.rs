//! Disaggregated annotation corpora.
//!
//! A corpus keeps every annotator's label for every instance. Two on-disk
//! formats are accepted: JSONL (one instance per line) and a long CSV
//! (`instance_id,text,annotator,label`, one annotation per row). JSONL is
//! the canonical export format.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::aggregate::{annotation_disagreement_rate, disagreement_rate, majority_label};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub annotations: Vec<Annotation>,
}

impl Instance {
    pub fn votes(&self) -> Vec<usize> {
        self.annotations.iter().map(|a| a.label).collect()
    }

    pub fn label_of(&self, annotator: &str) -> Option<usize> {
        self.annotations
            .iter()
            .find(|a| a.annotator == annotator)
            .map(|a| a.label)
    }
}

/// A validated corpus. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationCorpus {
    instances: Vec<Instance>,
    class_count: usize,
    annotator_ids: BTreeSet<String>,
}

impl AnnotationCorpus {
    /// Validates and builds a corpus. Instance order is preserved.
    pub fn new(instances: Vec<Instance>, class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::Argument(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        let mut seen_ids = HashSet::with_capacity(instances.len());
        let mut annotator_ids = BTreeSet::new();
        for inst in &instances {
            validate_instance(inst, class_count)?;
            if !seen_ids.insert(inst.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate instance id {:?}",
                    inst.id
                )));
            }
            for a in &inst.annotations {
                annotator_ids.insert(a.annotator.clone());
            }
        }
        Ok(Self {
            instances,
            class_count,
            annotator_ids,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn annotator_ids(&self) -> &BTreeSet<String> {
        &self.annotator_ids
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Sub-corpus made of the instances at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let instances = indices
            .iter()
            .map(|&i| {
                self.instances.get(i).cloned().ok_or_else(|| {
                    Error::Argument(format!("instance index {i} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(instances, self.class_count)
    }

    /// Number of annotations per annotator.
    pub fn annotation_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            for a in &inst.annotations {
                *counts.entry(a.annotator.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }
}

fn validate_instance(inst: &Instance, class_count: usize) -> Result<()> {
    if inst.id.is_empty() {
        return Err(Error::Validation("instance with empty id".into()));
    }
    if inst.text.is_empty() {
        return Err(Error::Validation(format!(
            "instance {:?} has empty text",
            inst.id
        )));
    }
    if inst.annotations.is_empty() {
        return Err(Error::Validation(format!(
            "instance {:?} has no annotations",
            inst.id
        )));
    }
    let mut annotators = HashSet::with_capacity(inst.annotations.len());
    for a in &inst.annotations {
        if a.label >= class_count {
            return Err(Error::Validation(format!(
                "instance {:?}: label {} from annotator {:?} outside [0, {class_count})",
                inst.id, a.label, a.annotator
            )));
        }
        if !annotators.insert(a.annotator.as_str()) {
            return Err(Error::Validation(format!(
                "instance {:?}: annotator {:?} appears more than once",
                inst.id, a.annotator
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    #[serde(alias = "csv")]
    CsvLong,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "csv" | "csv_long" => Ok(Self::CsvLong),
            other => Err(Error::Argument(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Reads and validates a corpus from disk.
pub fn ingest(path: &Path, format: CorpusFormat, class_count: usize) -> Result<AnnotationCorpus> {
    if class_count < 2 {
        return Err(Error::Argument(format!(
            "class_count must be at least 2, got {class_count}"
        )));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        CorpusFormat::Jsonl => read_jsonl(reader, class_count),
        CorpusFormat::CsvLong => read_csv_long(reader, class_count),
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    text: String,
    annotations: Vec<JsonlAnnotation>,
}

#[derive(Deserialize)]
struct JsonlAnnotation {
    annotator: String,
    label: i64,
}

pub fn read_jsonl<R: BufRead>(reader: R, class_count: usize) -> Result<AnnotationCorpus> {
    let mut instances = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let annotations = record
            .annotations
            .into_iter()
            .map(|a| {
                let label = usize::try_from(a.label).map_err(|_| {
                    Error::Validation(format!(
                        "instance {:?} (line {line_no}): negative label {}",
                        record.id, a.label
                    ))
                })?;
                Ok(Annotation {
                    annotator: a.annotator,
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        instances.push(Instance {
            id: record.id,
            text: record.text,
            annotations,
        });
    }
    AnnotationCorpus::new(instances, class_count)
}

#[derive(Deserialize)]
struct CsvRow {
    instance_id: String,
    text: String,
    annotator: String,
    label: i64,
}

/// Long CSV: one annotation per row, instances grouped by id in order of
/// first appearance.
pub fn read_csv_long<R: Read>(reader: R, class_count: usize) -> Result<AnnotationCorpus> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut order: Vec<Instance> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, row) in rdr.deserialize::<CsvRow>().enumerate() {
        // header occupies line 1
        let line_no = n + 2;
        let row = row.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = usize::try_from(row.label).map_err(|_| {
            Error::Validation(format!(
                "instance {:?} (line {line_no}): negative label {}",
                row.instance_id, row.label
            ))
        })?;
        let slot = match index.get(&row.instance_id) {
            Some(&i) => {
                if order[i].text != row.text {
                    return Err(Error::Validation(format!(
                        "instance {:?} (line {line_no}): text differs between rows",
                        row.instance_id
                    )));
                }
                i
            }
            None => {
                index.insert(row.instance_id.clone(), order.len());
                order.push(Instance {
                    id: row.instance_id,
                    text: row.text,
                    annotations: Vec::new(),
                });
                order.len() - 1
            }
        };
        order[slot].annotations.push(Annotation {
            annotator: row.annotator,
            label,
        });
    }
    AnnotationCorpus::new(order, class_count)
}

#[derive(Serialize)]
struct JsonlOut<'a> {
    id: &'a str,
    text: &'a str,
    annotations: &'a [Annotation],
}

pub fn write_jsonl<W: Write>(corpus: &AnnotationCorpus, mut writer: W) -> Result<()> {
    for inst in corpus.instances() {
        let line = serde_json::to_string(&JsonlOut {
            id: &inst.id,
            text: &inst.text,
            annotations: &inst.annotations,
        })?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io("<jsonl output>", e))?;
    }
    Ok(())
}

pub fn export_jsonl(corpus: &AnnotationCorpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write_jsonl(corpus, &mut writer)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Table-style corpus summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Instances per strict-majority class.
    pub per_majority_class_counts: Vec<usize>,
    pub total_instances: usize,
    /// Instances without a strict majority.
    pub tie_instances: usize,
    pub annotator_count: usize,
    pub mean_annotators_per_instance: f64,
    /// Instance-level disagreement (see [`disagreement_rate`]); 0 when no
    /// instance has a strict majority.
    pub disagreement_rate: f64,
    /// Annotation-level reading: dissenting annotations over all annotations
    /// of strict-majority instances.
    pub annotation_disagreement_rate: f64,
}

pub fn corpus_stats(corpus: &AnnotationCorpus) -> CorpusStats {
    let k = corpus.class_count();
    let mut counts = vec![0usize; k];
    let mut ties = 0;
    let mut annotations = 0usize;
    for inst in corpus.instances() {
        annotations += inst.annotations.len();
        match majority_label(&inst.votes(), k) {
            Ok(Some(c)) => counts[c] += 1,
            Ok(None) => ties += 1,
            Err(_) => unreachable!("validated corpus has non-empty in-range votes"),
        }
    }
    let total = corpus.len();
    CorpusStats {
        per_majority_class_counts: counts,
        total_instances: total,
        tie_instances: ties,
        annotator_count: corpus.annotator_ids().len(),
        mean_annotators_per_instance: if total == 0 {
            0.0
        } else {
            annotations as f64 / total as f64
        },
        disagreement_rate: disagreement_rate(corpus).unwrap_or(0.0),
        annotation_disagreement_rate: annotation_disagreement_rate(corpus).unwrap_or(0.0),
    }
}

impl CorpusStats {
    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (c, n) in self.per_majority_class_counts.iter().enumerate() {
            out.push_str(&format!("class_{c},{n}\n"));
        }
        out.push_str(&format!("total_instances,{}\n", self.total_instances));
        out.push_str(&format!("tie_instances,{}\n", self.tie_instances));
        out.push_str(&format!("annotator_count,{}\n", self.annotator_count));
        out.push_str(&format!(
            "mean_annotators_per_instance,{:.6}\n",
            self.mean_annotators_per_instance
        ));
        out.push_str(&format!("disagreement_rate,{:.6}\n", self.disagreement_rate));
        out.push_str(&format!(
            "annotation_disagreement_rate,{:.6}\n",
            self.annotation_disagreement_rate
        ));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: AnnotationCorpus,
    pub dev: AnnotationCorpus,
    pub test: AnnotationCorpus,
}

/// Stratified, seeded train/dev/test partition.
///
/// Strata are the strict-majority labels plus one stratum for ties. Dev and
/// test sizes are `floor(n * ratio)`; train takes the remainder. Within each
/// partition the original corpus order is kept.
pub fn split(corpus: &AnnotationCorpus, ratios: SplitRatios, seed: u64) -> Result<Splits> {
    let SplitRatios { train, dev, test } = ratios;
    if !(train > 0.0 && dev > 0.0 && test > 0.0) {
        return Err(Error::Argument(format!(
            "split ratios must all be positive, got ({train}, {dev}, {test})"
        )));
    }
    if (train + dev + test - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split ratios must sum to 1, got {}",
            train + dev + test
        )));
    }
    let n = corpus.len();
    if n < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 instances to split, got {n}"
        )));
    }
    let n_dev = floor_count(n, dev);
    let n_test = floor_count(n, test);
    if n_dev == 0 || n_test == 0 || n_dev + n_test >= n {
        return Err(Error::Argument(format!(
            "{n} instances are too few for ratios ({train}, {dev}, {test})"
        )));
    }

    // stratum key: Some(class) or None for ties; BTreeMap keeps order stable
    let k = corpus.class_count();
    let mut strata: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, inst) in corpus.instances().iter().enumerate() {
        let key = majority_label(&inst.votes(), k)?;
        strata.entry(key).or_default().push(i);
    }
    let mut rng = seeding::stream(seed, &["split"]);
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
    }

    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let test_alloc = allocate(&sizes, n_test, &sizes);
    let remaining: Vec<usize> = sizes.iter().zip(&test_alloc).map(|(s, t)| s - t).collect();
    let dev_alloc = allocate(&sizes, n_dev, &remaining);

    let mut train_idx = Vec::new();
    let mut dev_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (s, members) in strata.values().enumerate() {
        let (t, d) = (test_alloc[s], dev_alloc[s]);
        test_idx.extend_from_slice(&members[..t]);
        dev_idx.extend_from_slice(&members[t..t + d]);
        train_idx.extend_from_slice(&members[t + d..]);
    }
    train_idx.sort_unstable();
    dev_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(Splits {
        train: corpus.select(&train_idx)?,
        dev: corpus.select(&dev_idx)?,
        test: corpus.select(&test_idx)?,
    })
}

fn floor_count(n: usize, ratio: f64) -> usize {
    // tolerance absorbs representation error such as 0.29 * 100 = 28.999...
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Largest-remainder apportionment of `total` across strata proportional to
/// their sizes, never exceeding `caps`.
fn allocate(sizes: &[usize], total: usize, caps: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let share = total as f64 / n as f64;
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * share).collect();
    let mut alloc: Vec<usize> = exact
        .iter()
        .zip(caps)
        .map(|(&e, &cap)| (e.floor() as usize).min(cap))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut assigned: usize = alloc.iter().sum();
    while assigned < total {
        let before = assigned;
        for &s in &order {
            if assigned == total {
                break;
            }
            if alloc[s] < caps[s] {
                alloc[s] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    alloc
}
