use std::path::{Path, PathBuf};

use perspective::corpus::{self, corpus_stats, AnnotationCorpus};
use perspective::error::{Error, Result};
use perspective::featurize::Vocabulary;
use perspective::harness::{
    self, emit_report, explain_predictor, featurizer_for, load_corpus, load_report, prepare, resolve_k, run_cells,
    synth_corpus, to_csv, CorpusSource, ExperimentConfig, Predictor, ReportFormat, ReportRow, SynthSpec,
};
use perspective::explain::{render_html, Method};
use perspective::metrics::CSV_HEADER;
use perspective::model::ClassifierModel;
use perspective::train::EnsembleModel;

use crate::args::{out_dir, ExplainArgs, ModelArgs, Overrides, ReportArgs, SynthArgs};

const CONFIG_FILE: &str = "config.toml";
const VOCAB_FILE: &str = "vocab.json";
const MODEL_FILE: &str = "model.ckpt";
const ENSEMBLE_DIR: &str = "ensemble";
const ROW_FILE: &str = "row.json";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn require_file_corpus(config: &ExperimentConfig, command: &str) -> Result<()> {
    match config.corpus {
        CorpusSource::File { .. } => Ok(()),
        CorpusSource::Synth(_) => Err(Error::Argument(format!(
            "{command} needs a corpus file (--corpus, or a [corpus] section with kind = \"file\")"
        ))),
    }
}

pub fn ingest(o: &Overrides) -> Result<()> {
    let config = o.resolve()?;
    require_file_corpus(&config, "ingest")?;
    let corpus = load_corpus(&config.corpus)?;
    let dir = out_dir(&config, "out");
    create_dir(&dir)?;
    let path = dir.join("corpus.jsonl");
    corpus::export_jsonl(&corpus, &path)?;
    println!(
        "{} instances, {} annotators, {} classes -> {}",
        corpus.len(),
        corpus.annotator_ids().len(),
        corpus.class_count(),
        path.display()
    );
    Ok(())
}

pub fn stats(o: &Overrides) -> Result<()> {
    let config = o.resolve()?;
    let csv = corpus_stats(&load_corpus(&config.corpus)?).to_csv();
    print!("{csv}");
    if let Some(dir) = &config.out_dir {
        create_dir(dir)?;
        write(&dir.join("stats.csv"), &csv)?;
    }
    Ok(())
}

pub fn split(o: &Overrides) -> Result<()> {
    let config = o.resolve()?;
    let corpus = load_corpus(&config.corpus)?;
    let splits = corpus::split(&corpus, config.split, harness::experiment::split_seed(config.seed))?;
    let dir = out_dir(&config, "out");
    create_dir(&dir)?;
    for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let path = dir.join(format!("{name}.jsonl"));
        corpus::export_jsonl(part, &path)?;
        println!("{name}: {} instances -> {}", part.len(), path.display());
    }
    Ok(())
}

fn print_rows(rows: &[&ReportRow]) {
    println!("{CSV_HEADER}");
    for r in rows {
        println!("{}", r.eval.csv_row(&r.approach.to_string(), &r.arch.to_string()));
    }
}

pub fn train(o: &Overrides) -> Result<()> {
    let mut config = o.resolve()?;
    if config.approaches.len() != 1 || config.archs.len() != 1 {
        return Err(Error::Argument(
            "train needs exactly one --approach and one --arch".into(),
        ));
    }
    config.explain.enabled = false;
    let corpus = load_corpus(&config.corpus)?;
    let (_, mut cells) = run_cells(&config, &corpus)?;
    let cell = cells.pop().expect("one cell");
    let dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("model-{}-{}", cell.approach, cell.arch)));
    create_dir(&dir)?;
    write(&dir.join(CONFIG_FILE), config.to_toml()?)?;
    write(&dir.join(VOCAB_FILE), cell.featurizer.vocab.to_json()?)?;
    match &cell.predictor {
        Predictor::Single(m) => m.save(&dir.join(MODEL_FILE))?,
        Predictor::Ensemble(e) => e.save(&dir.join(ENSEMBLE_DIR))?,
    }
    write(&dir.join(ROW_FILE), serde_json::to_vec_pretty(&cell.row)?)?;
    print_rows(&[&cell.row]);
    eprintln!("model saved to {}", dir.display());
    Ok(())
}

/// A model directory written by `train`, with its config under the given
/// overrides. The saved approach and architecture always win.
struct Saved {
    config: ExperimentConfig,
    vocab: Vocabulary,
    predictor: Predictor,
}

fn load_saved(m: &ModelArgs) -> Result<Saved> {
    let dir = &m.model;
    let stored = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let (approaches, archs) = (stored.approaches.clone(), stored.archs.clone());
    let overrides = Overrides {
        approach: Vec::new(),
        arch: Vec::new(),
        ..m.overrides.clone()
    };
    let mut config = overrides.apply(stored)?;
    config.approaches = approaches;
    config.archs = archs;
    let vocab = Vocabulary::from_json(&read_to_string(&dir.join(VOCAB_FILE))?)?;
    let single = dir.join(MODEL_FILE);
    let predictor = if single.exists() {
        Predictor::Single(ClassifierModel::load(&single)?)
    } else {
        Predictor::Ensemble(EnsembleModel::load(&dir.join(ENSEMBLE_DIR))?)
    };
    Ok(Saved {
        config,
        vocab,
        predictor,
    })
}

pub fn eval(m: &ModelArgs) -> Result<()> {
    let saved = load_saved(m)?;
    let config = &saved.config;
    let (approach, arch) = (config.approaches[0], config.archs[0]);
    let corpus = load_corpus(&config.corpus)?;
    let data = prepare(config, &corpus)?;
    let featurizer = featurizer_for(config, &saved.vocab, arch);
    let eval = harness::evaluate_predictor(&saved.predictor, &featurizer, &data.test, corpus.class_count())?;
    println!("{CSV_HEADER}");
    println!("{}", eval.csv_row(&approach.to_string(), &arch.to_string()));
    Ok(())
}

pub fn explain(a: &ExplainArgs) -> Result<()> {
    let mut saved = load_saved(&a.model)?;
    if let Some(n) = a.instances {
        saved.config.explain.instances = n;
    }
    if !a.methods.is_empty() {
        saved.config.explain.methods = a.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
    }
    let config = &saved.config;
    config.validate()?;
    let (approach, arch) = (config.approaches[0], config.archs[0]);
    let corpus = load_corpus(&config.corpus)?;
    let mut data = prepare(config, &corpus)?;
    data.vocab = saved.vocab.clone();
    let featurizer = featurizer_for(config, &saved.vocab, arch);
    let k = resolve_k(config, &data);
    let cell = explain_predictor(config, &data, approach, arch, &saved.predictor, &featurizer, k)?;
    let dir = a.model.overrides.out.clone().unwrap_or_else(|| a.model.model.clone());
    create_dir(&dir)?;
    write(&dir.join("explanations.json"), serde_json::to_vec_pretty(&cell)?)?;
    let title = format!("Explanations: {approach} / {arch}");
    write(&dir.join("explanations.html"), render_html(&title, &cell.instances))?;
    for (what, why) in &cell.skipped {
        eprintln!("skipped {what}: {why}");
    }
    println!("instance,confidence,predicted_class");
    for s in &cell.selected {
        println!("{},{:.6},{}", s.id, s.confidence, s.predicted_class);
    }
    eprintln!("explanations written to {}", dir.display());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let config = a.overrides.resolve()?;
    let mut spec = match &config.corpus {
        CorpusSource::Synth(s) => s.clone(),
        CorpusSource::File { .. } => SynthSpec::default(),
    };
    if let Some(v) = a.overrides.classes {
        spec.class_count = v;
    }
    if let Some(v) = a.n_instances {
        spec.n_instances = v;
    }
    if let Some(v) = a.alpha {
        spec.dirichlet_alpha = v;
    }
    if let Some(v) = a.annotators {
        spec.annotators_per_instance = v;
    }
    if let Some(v) = a.vocab_size {
        spec.vocab_size = v;
    }
    if let Some(v) = a.tokens_per_text {
        spec.tokens_per_text = v;
    }
    if let Some(v) = a.signal_strength {
        spec.signal_strength = v;
    }
    if !a.class_prior.is_empty() {
        spec.class_prior = Some(a.class_prior.clone());
    }
    if let Some(seed) = a.overrides.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let corpus: AnnotationCorpus = synth_corpus(&spec)?;
    let dir = out_dir(&config, "out");
    create_dir(&dir)?;
    let path = dir.join("synth.jsonl");
    corpus::export_jsonl(&corpus, &path)?;
    println!("{} instances -> {}", corpus.len(), path.display());
    Ok(())
}

pub fn run(o: &Overrides) -> Result<()> {
    let config = o.resolve()?;
    let corpus = load_corpus(&config.corpus)?;
    let (report, _) = run_cells(&config, &corpus)?;
    let dir = out_dir(&config, "out");
    emit_report(&report, &dir, &ReportFormat::ALL)?;
    print!("{}", to_csv(&report));
    eprintln!("report written to {}", dir.display());
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let report = load_report(&a.input)?;
    let formats = a.formats.iter().map(|f| f.parse()).collect::<Result<Vec<ReportFormat>>>()?;
    let dir = match &a.out {
        Some(d) => d.clone(),
        None => a.input.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    for path in emit_report(&report, &dir, &formats)? {
        println!("{}", path.display());
    }
    Ok(())
}
