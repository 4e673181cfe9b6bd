//! Table- and chart-shaped summaries rebuilt from per-unit evaluation files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::warn;
use lodsig_core::eval::report::{algorithm_order, read_metrics_csv, MetricTable, CHART_COLUMNS};
use lodsig_core::eval::{EvalReport, Metric, TruthMode};

use crate::manifest::{ManifestFile, RESOLVED_MANIFEST};
use crate::run::{eval_path, write_atomic};

pub const SUMMARY_DIR: &str = "summary";

#[derive(Debug, Default)]
pub struct Summary {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub reports: Vec<EvalReport>,
}

/// (drug, algorithm) pairs a run was asked for, from its manifest echo.
fn expected_units(dir: &Path) -> Result<Option<(Vec<String>, Vec<String>)>> {
    let path = dir.join(RESOLVED_MANIFEST);
    if !path.is_file() {
        return Ok(None);
    }
    let file = ManifestFile::load(&path)?;
    let mut algorithms = Vec::new();
    for entry in &file.algorithms {
        algorithms.push(entry.id().with_context(|| format!("{}", path.display()))?);
    }
    Ok(Some((file.drugs, algorithms)))
}

/// Every `eval/<drug>/<algorithm>.csv` present.
fn scan(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let root = dir.join("eval");
    if !root.is_dir() {
        return Ok(out);
    }
    for d in std::fs::read_dir(&root)? {
        let d = d?.path();
        if d.is_dir() {
            for f in std::fs::read_dir(&d)? {
                let f = f?.path();
                if f.extension().is_some_and(|e| e == "csv") {
                    out.push(f);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_reports(path: &Path, warnings: &mut Vec<String>) -> Vec<EvalReport> {
    let label = path.display().to_string();
    match File::open(path).map_err(|e| e.to_string()).and_then(|f| read_metrics_csv(f, &label).map_err(|e| e.to_string())) {
        Ok(r) => r,
        Err(e) => {
            warnings.push(format!("unreadable eval file {label}: {e}"));
            Vec::new()
        }
    }
}

fn table(drugs: &[String], algorithms: &[String], lookup: &BTreeMap<(String, String), &EvalReport>, metric: Metric) -> MetricTable {
    let cells = drugs
        .iter()
        .map(|d| {
            algorithms
                .iter()
                .map(|a| lookup.get(&(d.clone(), a.clone())).and_then(|r| r.metric(metric)))
                .collect()
        })
        .collect();
    MetricTable { algorithms: algorithms.to_vec(), drugs: drugs.to_vec(), cells }
}

fn chart_csv(t: &MetricTable, panel: TruthMode) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CHART_COLUMNS)?;
    for (d, row) in t.drugs.iter().zip(&t.cells) {
        for (a, cell) in t.algorithms.iter().zip(row) {
            let v = cell.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([panel.as_str(), d, a, &v])?;
        }
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Writes `summary/precision_10.csv`, `summary/precision_50.csv` and one
/// MAP chart file per truth mode. Missing evaluation files leave blank
/// cells and are reported as warnings.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let mut summary = Summary::default();
    let (drugs, algorithms) = match expected_units(dir)? {
        Some((drugs, algorithms)) => {
            for d in &drugs {
                for a in &algorithms {
                    let path = eval_path(dir, d, a);
                    if path.is_file() {
                        summary.reports.extend(read_reports(&path, &mut summary.warnings));
                    } else {
                        summary.warnings.push(format!("missing eval file {}", path.display()));
                    }
                }
            }
            (drugs, algorithms)
        }
        None => {
            summary.warnings.push(format!("no {RESOLVED_MANIFEST}; summarising the eval files present"));
            for path in scan(dir)? {
                summary.reports.extend(read_reports(&path, &mut summary.warnings));
            }
            let drugs: BTreeSet<String> = summary.reports.iter().map(|r| r.drug_code.clone()).collect();
            let algorithms: BTreeSet<String> = summary.reports.iter().map(|r| r.algorithm_id.clone()).collect();
            (drugs.into_iter().collect(), algorithms.into_iter().collect())
        }
    };
    let algorithms = algorithm_order(algorithms.iter().map(String::as_str));
    let lookup: BTreeMap<(String, String), &EvalReport> = summary
        .reports
        .iter()
        .map(|r| ((r.drug_code.clone(), r.algorithm_id.clone()), r))
        .collect();

    let out = dir.join(SUMMARY_DIR);
    let mut written = Vec::new();
    for (name, metric) in [("precision_10.csv", Metric::Precision10), ("precision_50.csv", Metric::Precision50)] {
        let t = table(&drugs, &algorithms, &lookup, metric);
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        let path = out.join(name);
        write_atomic(&path, &buf)?;
        written.push(path);
    }
    for (mode, metric) in [
        (TruthMode::All, Metric::MapAll),
        (TruthMode::Rare, Metric::MapRare),
        (TruthMode::ReactionCodes, Metric::MapReactionCodes),
    ] {
        let t = table(&drugs, &algorithms, &lookup, metric);
        let path = out.join(format!("map_{}_chart.csv", mode.as_str()));
        write_atomic(&path, &chart_csv(&t, mode)?)?;
        written.push(path);
    }
    for w in &summary.warnings {
        warn!("{w}");
    }
    summary.written = written;
    Ok(summary)
}
