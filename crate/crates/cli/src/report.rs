//! The `report` subcommand: aggregates run directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use vhetnet::metrics::nes;
use vhetnet::numfmt::sig9;

use crate::svg::{line_chart, Series};
use crate::Failure;

pub const SUMMARY_HEADER: &str = "run,metric,scope,value";

/// Reads one CSV into header-keyed rows.
fn read_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>, Failure> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Failure::csv(path, e))?;
    let headers = r.headers().map_err(|e| Failure::csv(path, e))?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Failure::csv(path, e))?;
            Ok(headers
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect())
        })
        .collect()
}

fn number(path: &Path, row: &BTreeMap<String, String>, key: &str) -> Result<f64, Failure> {
    row.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Failure::parse(path, format!("missing or non-numeric `{key}`")))
}

fn grid_series(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    read_rows(path)?
        .iter()
        .map(|r| Ok((number(path, r, "slot")?, number(path, r, "grid_power_w")?)))
        .collect()
}

struct RunSummary {
    label: String,
    rows: Vec<(String, String, f64)>,
    grid: Option<Vec<(f64, f64)>>,
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Files a directory must contain to be summarised; `None` if it holds no
/// run at all.
fn missing_files(dir: &Path) -> Option<Vec<&'static str>> {
    let has = |f: &str| dir.join(f).is_file();
    let switch_files = ["timeline.csv", "baseline_timeline.csv", "metrics.csv"];
    let estimate_files = ["mape_sweep.csv"];
    let is_switch = switch_files.iter().any(|f| has(f));
    let is_estimate = estimate_files.iter().any(|f| has(f)) || has("comparison.csv");
    if !is_switch && !is_estimate {
        return None;
    }
    let mut missing = Vec::new();
    if is_switch {
        missing.extend(switch_files.iter().filter(|f| !has(f)));
    }
    if is_estimate {
        missing.extend(estimate_files.iter().filter(|f| !has(f)));
    }
    Some(missing)
}

fn summarise(dir: &Path) -> Result<RunSummary, Failure> {
    let mut rows = Vec::new();
    let mut grid = None;
    let timeline = dir.join("timeline.csv");
    if timeline.is_file() {
        let metrics_path = dir.join("metrics.csv");
        for r in read_rows(&metrics_path)? {
            let value = number(&metrics_path, &r, "value")?;
            let metric = r.get("metric").cloned().unwrap_or_default();
            let scope = r.get("scope").cloned().unwrap_or_default();
            if metric.starts_with("sleep_share") {
                continue;
            }
            rows.push((metric, scope, value));
        }
        let g = grid_series(&timeline)?;
        let b = grid_series(&dir.join("baseline_timeline.csv"))?;
        let gv: Vec<f64> = g.iter().map(|p| p.1).collect();
        let bv: Vec<f64> = b.iter().map(|p| p.1).collect();
        rows.push((
            "nes_recomputed_percent".into(),
            "network".into(),
            nes(&bv, &gv)?,
        ));
        grid = Some(g);
    }
    let sweep = dir.join("mape_sweep.csv");
    if sweep.is_file() {
        for r in read_rows(&sweep)? {
            let label = r.get("label").cloned().unwrap_or_default();
            rows.push((
                "mape_percent".into(),
                label.clone(),
                number(&sweep, &r, "mape_percent")?,
            ));
            rows.push((
                "decision_change_percent".into(),
                label,
                number(&sweep, &r, "decision_change_percent")?,
            ));
        }
    }
    Ok(RunSummary {
        label: run_label(dir),
        rows,
        grid,
    })
}

pub struct ReportOutcome {
    pub written: Vec<PathBuf>,
    /// `(run directory, missing files)` for every skipped run.
    pub skipped: Vec<(PathBuf, Vec<String>)>,
}

pub fn report(dirs: &[PathBuf], out: &Path) -> Result<ReportOutcome, Failure> {
    crate::run::prepare_out(out)?;
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    for dir in dirs {
        match missing_files(dir) {
            None => skipped.push((
                dir.clone(),
                vec!["timeline.csv or mape_sweep.csv".to_string()],
            )),
            Some(m) if !m.is_empty() => {
                skipped.push((dir.clone(), m.into_iter().map(String::from).collect()))
            }
            Some(_) => summaries.push(summarise(dir)?),
        }
    }
    let mut text = format!("{SUMMARY_HEADER}\n");
    for s in &summaries {
        for (metric, scope, value) in &s.rows {
            text += &format!("{},{},{},{}\n", s.label, metric, scope, sig9(*value));
        }
    }
    let summary = out.join("summary.csv");
    std::fs::write(&summary, text).map_err(|e| Failure::io(&summary, e))?;
    let mut written = vec![summary];

    let series: Vec<Series> = summaries
        .iter()
        .filter_map(|s| {
            s.grid.as_ref().map(|g| Series {
                label: s.label.clone(),
                points: g.clone(),
            })
        })
        .collect();
    if !series.is_empty() {
        let p = out.join("summary_power.svg");
        let chart = line_chart("Grid power per run", "slot", "grid power (W)", &series);
        std::fs::write(&p, chart).map_err(|e| Failure::io(&p, e))?;
        written.push(p);
    }
    Ok(ReportOutcome { written, skipped })
}
