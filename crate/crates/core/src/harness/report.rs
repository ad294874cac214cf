//! CSV, markdown, HTML and JSON renderings of an experiment report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::render_fragment;
use crate::metrics::{EvalResult, CSV_HEADER};
use crate::model::Arch;

use super::config::Approach;
use super::experiment::ExperimentReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Html,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] = [
        ReportFormat::Csv,
        ReportFormat::Markdown,
        ReportFormat::Html,
        ReportFormat::Json,
    ];
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            "html" => Ok(Self::Html),
            "json" => Ok(Self::Json),
            other => Err(Error::Argument(format!("unknown report format {other:?}"))),
        }
    }
}

/// Header plus one line per row, in report order. Contains no timestamps,
/// so reruns of the same configuration are byte-identical.
pub fn to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        out.push_str(&row.eval.csv_row(&row.approach.to_string(), &row.arch.to_string()));
        out.push('\n');
    }
    out
}

type MetricFn = fn(&EvalResult) -> f64;

const METRICS: [(&str, MetricFn); 4] = [
    ("Accuracy", |e| e.accuracy),
    ("Macro-F1", |e| e.macro_f1),
    ("Mean confidence", |e| e.mean_confidence),
    ("Mean JSD", |e| e.mean_jsd),
];

fn grid_axes(report: &ExperimentReport) -> (Vec<Approach>, Vec<Arch>) {
    let mut approaches: Vec<Approach> = report.rows.iter().map(|r| r.approach).collect();
    approaches.sort();
    approaches.dedup();
    let mut archs: Vec<Arch> = report.rows.iter().map(|r| r.arch).collect();
    archs.sort();
    archs.dedup();
    (approaches, archs)
}

/// One section per metric, each an approach × architecture table.
pub fn to_markdown(report: &ExperimentReport) -> String {
    let p = &report.provenance;
    let (approaches, archs) = grid_axes(report);
    let mut out = String::from("# Experiment report\n\n");
    let _ = writeln!(out, "- config hash: `{}`", p.config_hash);
    let _ = writeln!(out, "- root seed: {} (split seed {})", p.root_seed, p.split_seed);
    let _ = writeln!(out, "- soft-label method: {}", p.soft_label_method);
    let _ = writeln!(out, "- tie policy: {}", p.tie_policy);
    let _ = writeln!(
        out,
        "- split: train {} / dev {} / test {} ({} tie instances dropped from test)",
        p.train_size, p.dev_size, p.test_size, p.test_ties_dropped
    );
    let _ = writeln!(out, "- test ids hash: `{}`", p.test_ids_hash);
    let _ = writeln!(out, "- gold labels: {}; gold distributions: {}", p.gold_labels, p.gold_distributions);
    for (k, v) in &p.conventions {
        let _ = writeln!(out, "- {k}: {v}");
    }
    for (title, metric) in METRICS {
        let _ = write!(out, "\n## {title}\n\n| approach |");
        for a in &archs {
            let _ = write!(out, " {a} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(archs.len()));
        out.push('\n');
        for ap in &approaches {
            let _ = write!(out, "| {ap} |");
            for ar in &archs {
                match report.row(*ap, *ar) {
                    Some(r) => {
                        let _ = write!(out, " {:.4} |", metric(&r.eval));
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
    }
    out
}

fn esc(s: &str) -> String {
    crate::explain::escape_html(s)
}

pub fn to_html(report: &ExperimentReport) -> String {
    let (approaches, archs) = grid_axes(report);
    let mut out = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Experiment report</title><style>",
    );
    out.push_str(crate::explain::HTML_STYLE);
    out.push_str("</style></head><body><h1>Experiment report</h1>\n");
    for (title, metric) in METRICS {
        let _ = write!(out, "<h2>{title}</h2><table><tr><th>approach</th>");
        for a in &archs {
            let _ = write!(out, "<th>{a}</th>");
        }
        out.push_str("</tr>");
        for ap in &approaches {
            let _ = write!(out, "<tr><th>{ap}</th>");
            for ar in &archs {
                match report.row(*ap, *ar) {
                    Some(r) => {
                        let _ = write!(out, "<td>{:.4}</td>", metric(&r.eval));
                    }
                    None => out.push_str("<td>-</td>"),
                }
            }
            out.push_str("</tr>");
        }
        out.push_str("</table>\n");
    }
    out.push_str("<h2>Provenance</h2><pre>");
    out.push_str(&esc(&serde_json::to_string_pretty(&report.provenance).unwrap_or_default()));
    out.push_str("</pre>\n");
    for cell in &report.explanations {
        let _ = write!(out, "<h2>Explanations: {} / {}</h2>", cell.approach, cell.arch);
        for (what, why) in &cell.skipped {
            let _ = write!(out, "<p>skipped {}: {}</p>", esc(what), esc(why));
        }
        if !cell.methods.is_empty() {
            let _ = write!(out, "<h3>Top-{} agreement</h3><table><tr><th></th>", cell.k);
            for m in &cell.methods {
                let _ = write!(out, "<th>{m}</th>");
            }
            out.push_str("</tr>");
            for (m, row) in cell.methods.iter().zip(&cell.agreement) {
                let _ = write!(out, "<tr><th>{m}</th>");
                for v in row {
                    match v {
                        Some(v) => {
                            let _ = write!(out, "<td>{v:.3}</td>");
                        }
                        None => out.push_str("<td>n/a</td>"),
                    }
                }
                out.push_str("</tr>");
            }
            out.push_str("</table>\n");
        }
        out.push_str(&render_fragment(&cell.instances));
    }
    out.push_str("</body></html>\n");
    out
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the requested renderings into `dir` and returns the paths
/// written. JSON output also writes one file per explained instance under
/// `explanations/`.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::Argument("report has no rows".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Csv => {
                let p = dir.join("report.csv");
                write_file(&p, to_csv(report).as_bytes())?;
                written.push(p);
            }
            ReportFormat::Markdown => {
                let p = dir.join("report.md");
                write_file(&p, to_markdown(report).as_bytes())?;
                written.push(p);
            }
            ReportFormat::Html => {
                let p = dir.join("report.html");
                write_file(&p, to_html(report).as_bytes())?;
                written.push(p);
            }
            ReportFormat::Json => {
                let p = dir.join("report.json");
                write_file(&p, &serde_json::to_vec_pretty(report)?)?;
                written.push(p);
                for cell in &report.explanations {
                    if cell.instances.is_empty() {
                        continue;
                    }
                    let sub = dir.join("explanations").join(format!("{}-{}", cell.approach, cell.arch));
                    std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                    for (rank, inst) in cell.instances.iter().enumerate() {
                        let p = sub.join(format!("{rank:02}.json"));
                        write_file(&p, &serde_json::to_vec_pretty(inst)?)?;
                        written.push(p);
                    }
                }
            }
        }
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
