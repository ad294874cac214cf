//! Static HTML view of attributions: one row of colored chips per method,
//! green for positive and red for negative scores.

use std::fmt::Write;

use super::{Attribution, InstanceExplanation};

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn chips(attr: &Attribution) -> String {
    let max = attr
        .scores
        .iter()
        .map(|s| s.score.abs())
        .fold(0.0f64, f64::max);
    let mut out = String::new();
    for s in &attr.scores {
        let alpha = if max > 0.0 { s.score.abs() / max } else { 0.0 };
        let rgb = if s.score >= 0.0 { "0,160,60" } else { "210,40,40" };
        let label = if s.display.is_empty() { s.index.to_string() } else { s.display.clone() };
        let _ = write!(
            out,
            "<span class=\"chip\" style=\"background:rgba({rgb},{alpha:.3})\" title=\"{:.6}\">{}</span> ",
            s.score,
            escape(&label)
        );
    }
    out
}

/// Body fragment for a set of explained instances.
pub fn render_fragment(explanations: &[InstanceExplanation]) -> String {
    let mut out = String::new();
    for e in explanations {
        let _ = write!(
            out,
            "<section class=\"instance\"><h3>{}</h3><p class=\"text\">{}</p>\
             <p>predicted class {} (confidence {:.4})</p><table>",
            escape(&e.instance_id),
            escape(&e.text),
            e.predicted_class,
            e.confidence
        );
        for a in &e.attributions {
            let _ = write!(
                out,
                "<tr><th>{}</th><td>{}</td></tr>",
                a.method,
                chips(a)
            );
        }
        out.push_str("</table></section>\n");
    }
    out
}

pub const STYLE: &str = "body{font-family:sans-serif;margin:2em}\
.chip{padding:1px 4px;margin:1px;border-radius:3px;display:inline-block}\
table{border-collapse:collapse}th,td{padding:4px 8px;text-align:left;vertical-align:top}\
.instance{border-top:1px solid #ccc;padding-top:.5em}";

/// Standalone HTML page.
pub fn render_html(title: &str, explanations: &[InstanceExplanation]) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title>\
         <style>{STYLE}</style></head><body><h1>{t}</h1>\n{}</body></html>\n",
        render_fragment(explanations),
        t = escape(title)
    )
}
