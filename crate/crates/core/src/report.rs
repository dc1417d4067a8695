//! Summary table over the `metrics.json` files of several scenario runs.

use std::path::{Path, PathBuf};

use crate::error::{Result, SocError};
use crate::scenario::ScenarioReport;

const COLUMNS: [&str; 6] = [
    "scenario",
    "estimator",
    "rmse_overall",
    "rmse_post_convergence",
    "max_abs_error_post_convergence",
    "convergence_time",
];

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

fn rows(reports: &[ScenarioReport]) -> Vec<[String; 6]> {
    let mut out = Vec::new();
    for r in reports {
        for m in &r.estimators {
            out.push([
                r.scenario.to_string(),
                m.estimator.clone(),
                format!("{:.6}", m.rmse_overall),
                opt(m.rmse_post_convergence, 6),
                opt(m.max_abs_error_post_convergence, 6),
                opt(m.convergence_time, 1),
            ]);
        }
    }
    out
}

/// Fixed-width text table, one row per (scenario, estimator).
pub fn table(reports: &[ScenarioReport]) -> String {
    let rows = rows(reports);
    let mut widths = COLUMNS.map(str::len);
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[&str]| {
        let mut s = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&COLUMNS);
    for r in &rows {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out
}

pub fn csv(reports: &[ScenarioReport]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for r in rows(reports) {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Reads `dir/metrics.json`, or `dir/*/metrics.json` for a directory of runs.
/// Subdirectories without a metrics file are reported together.
pub fn collect(dir: &Path) -> Result<Vec<ScenarioReport>> {
    let direct = dir.join("metrics.json");
    let files: Vec<PathBuf> = if direct.is_file() {
        vec![direct.clone()]
    } else {
        let entries = std::fs::read_dir(dir).map_err(|e| SocError::io(dir, e))?;
        let mut subdirs = Vec::new();
        for e in entries {
            let p = e.map_err(|e| SocError::io(dir, e))?.path();
            if p.is_dir() {
                subdirs.push(p);
            }
        }
        subdirs.sort();
        let missing: Vec<PathBuf> = subdirs
            .iter()
            .map(|d| d.join("metrics.json"))
            .filter(|f| !f.is_file())
            .collect();
        if !missing.is_empty() {
            return Err(SocError::MissingInputs(missing));
        }
        subdirs.into_iter().map(|d| d.join("metrics.json")).collect()
    };
    if files.is_empty() {
        return Err(SocError::MissingInputs(vec![direct]));
    }
    let mut reports = files
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(f).map_err(|e| SocError::io(f, e))?;
            serde_json::from_str::<ScenarioReport>(&text).map_err(|e| SocError::Json {
                path: f.clone(),
                source: e,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by_key(|r| r.scenario);
    Ok(reports)
}
