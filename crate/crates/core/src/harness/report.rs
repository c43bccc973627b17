//! Plots and summary tables for run records and analysis results.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::experiments::{AnalysisPoint, AnalysisResult};
use super::plot::{line_plot, Series};
use crate::corpus::Role;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::unlearn::RunRecord;

/// A result document recognized by `report`.
pub enum ResultDoc {
    Run(RunRecord),
    Analysis(AnalysisResult),
}

impl ResultDoc {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        if v.get("schema_version").is_none() {
            return Err(Error::Validation(format!("{} has no schema_version", path.display())));
        }
        if v.get("kind").is_some() {
            Ok(ResultDoc::Analysis(serde_json::from_value(v)?))
        } else if v.get("checkpoints").is_some() {
            Ok(ResultDoc::Run(serde_json::from_value(v)?))
        } else {
            Err(Error::Validation(format!(
                "{} is neither a run record nor an analysis",
                path.display()
            )))
        }
    }

    /// Rows as (axis, series label, report, extra values).
    fn rows(&self) -> (String, Vec<(f64, String, &MetricReport, BTreeMap<String, f64>)>) {
        match self {
            ResultDoc::Run(r) => (
                "step".into(),
                r.checkpoints
                    .iter()
                    .map(|c| {
                        (
                            c.step as f64,
                            r.config.algorithm.to_string(),
                            &c.metrics,
                            BTreeMap::new(),
                        )
                    })
                    .collect(),
            ),
            ResultDoc::Analysis(a) => (
                a.axis_name.clone(),
                a.points
                    .iter()
                    .map(|p| (p.axis, series_label(p), &p.report, p.extra.clone()))
                    .collect(),
            ),
        }
    }
}

fn series_label(p: &AnalysisPoint) -> String {
    match (&p.algorithm, &p.series) {
        (Some(a), Some(s)) => format!("{a} {s}"),
        (Some(a), None) => a.to_string(),
        (None, Some(s)) => s.clone(),
        (None, None) => "all".into(),
    }
}

type Getter = fn(&MetricReport) -> Option<f64>;

fn metric_getters(reports: &[&MetricReport]) -> Vec<(String, Box<dyn Fn(&MetricReport) -> Option<f64>>)> {
    let mut roles: Vec<Role> = reports.iter().flat_map(|r| r.per_set.keys().copied()).collect();
    roles.sort();
    roles.dedup();
    let mut out: Vec<(String, Box<dyn Fn(&MetricReport) -> Option<f64>>)> = Vec::new();
    let fq: Getter = |r| r.forget_quality;
    let mu: Getter = |r| Some(r.model_utility);
    out.push(("forget_quality".into(), Box::new(fq)));
    out.push(("model_utility".into(), Box::new(mu)));
    for role in roles {
        out.push((
            format!("{role}.probability"),
            Box::new(move |r| r.per_set.get(&role).map(|m| m.probability)),
        ));
        out.push((
            format!("{role}.rouge"),
            Box::new(move |r| r.per_set.get(&role).map(|m| m.rouge)),
        ));
        out.push((
            format!("{role}.accuracy"),
            Box::new(move |r| r.per_set.get(&role).map(|m| m.accuracy)),
        ));
        out.push((
            format!("{role}.set_score"),
            Box::new(move |r| r.set_scores.get(&role).copied()),
        ));
    }
    out
}

/// Writes one SVG per metric (and per extra value) into `plots_dir`; returns the paths.
pub fn render_plots(doc: &ResultDoc, plots_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(plots_dir).map_err(|e| Error::io(plots_dir, e))?;
    let (axis, rows) = doc.rows();
    let reports: Vec<&MetricReport> = rows.iter().map(|r| r.2).collect();
    let mut written = Vec::new();
    let mut emit = |name: &str, get: &dyn Fn(usize) -> Option<f64>| -> Result<()> {
        let mut by_series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            if let Some(v) = get(i) {
                by_series.entry(row.1.as_str()).or_default().push((row.0, v));
            }
        }
        if by_series.is_empty() {
            return Ok(());
        }
        let series: Vec<Series> = by_series
            .into_iter()
            .map(|(label, points)| Series {
                label: label.to_string(),
                points,
            })
            .collect();
        let path = plots_dir.join(format!("{}.svg", name.replace('.', "_")));
        std::fs::write(&path, line_plot(name, &axis, name, &series)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for (name, get) in metric_getters(&reports) {
        emit(&name, &|i| get(rows[i].2))?;
    }
    let mut keys: Vec<String> = rows.iter().flat_map(|r| r.3.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    for key in keys {
        emit(&key, &|i| rows[i].3.get(&key).copied())?;
    }
    Ok(written)
}

fn cell(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

/// Markdown table with one row per checkpoint or analysis point.
pub fn summary_table(doc: &ResultDoc) -> String {
    let (axis, rows) = doc.rows();
    let reports: Vec<&MetricReport> = rows.iter().map(|r| r.2).collect();
    let getters = metric_getters(&reports);
    let mut extra_keys: Vec<String> = rows.iter().flat_map(|r| r.3.keys().cloned()).collect();
    extra_keys.sort();
    extra_keys.dedup();
    let mut s = String::new();
    let head: Vec<String> = [axis.clone(), "series".into()]
        .into_iter()
        .chain(getters.iter().map(|g| g.0.clone()))
        .chain(extra_keys.iter().cloned())
        .collect();
    let _ = writeln!(s, "| {} |", head.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(head.len()));
    for row in &rows {
        let mut cells = vec![format!("{}", row.0), row.1.clone()];
        cells.extend(getters.iter().map(|g| cell(g.1(row.2))));
        cells.extend(extra_keys.iter().map(|k| cell(row.3.get(k).copied())));
        let _ = writeln!(s, "| {} |", cells.join(" | "));
    }
    if let ResultDoc::Run(r) = doc {
        let _ = writeln!(
            s,
            "\nselected checkpoint: {} (step {})",
            r.selected_checkpoint,
            r.selected().step
        );
    }
    s
}
