//! CSV artifacts: ranked lists with truth labels, metric summaries, the
//! per-drug precision tables and tidy MAP chart data.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{truth_vector, AdrDictionary, EvalError, EvalReport, TruthMode, TruthVector};
use crate::ranking::{AlgorithmId, RankedSignalList};

pub const RANKED_COLUMNS: [&str; 4] = ["rank", "event_code", "score", "y"];
pub const METRICS_COLUMNS: [&str; 10] = [
    "algorithm",
    "drug",
    "precision_10",
    "precision_50",
    "map_all",
    "map_rare",
    "map_reaction_codes",
    "n_candidates",
    "n_known_adrs_in_list",
    "dictionary_size",
];
pub const CHART_COLUMNS: [&str; 4] = ["panel", "drug", "algorithm", "map"];
pub const MEAN_ROW_LABEL: &str = "Mean (3dp)";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// File-system-safe form of a code.
pub fn path_component(code: &str) -> String {
    let s: String = code
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}

/// Paper column order for the seven standard configurations, anything
/// else alphabetically after them.
pub fn algorithm_order<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = names.into_iter().collect();
    let key = |a: &str| AlgorithmId::ALL.iter().position(|id| id.as_str() == a).unwrap_or(usize::MAX);
    let mut out: Vec<&str> = set.into_iter().collect();
    out.sort_by(|a, b| key(a).cmp(&key(b)).then_with(|| a.cmp(b)));
    out.into_iter().map(str::to_owned).collect()
}

pub fn write_ranked_csv<W: Write>(writer: W, list: &RankedSignalList, dict: &AdrDictionary) -> Result<(), csv::Error> {
    let y = truth_vector(list, dict, TruthMode::All);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RANKED_COLUMNS)?;
    for (e, hit) in list.entries.iter().zip(&y.0) {
        w.write_record([
            e.rank.to_string(),
            e.event_code.clone(),
            fmt_opt(e.score),
            u8::from(*hit).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    pub rank: usize,
    pub event_code: String,
    pub score: Option<f64>,
    pub y: bool,
}

fn header_check(headers: &csv::StringRecord, expected: &[&'static str], file: &str) -> Result<(), EvalError> {
    for (i, col) in expected.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*col) {
            return Err(EvalError::MissingColumn { file: file.into(), column: col });
        }
    }
    Ok(())
}

pub fn read_ranked_csv<R: Read>(reader: R, file: &str) -> Result<Vec<RankedRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    header_check(rdr.headers().map_err(|e| EvalError::csv(file, e))?, &RANKED_COLUMNS, file)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EvalError::csv(file, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |m: &str| EvalError::Malformed { file: file.into(), line, message: m.into() };
        let rank = rec[0].parse().map_err(|_| bad("bad rank"))?;
        let score = match rec[2].trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("bad score"))?),
        };
        let y = match rec[3].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad("y must be 0 or 1")),
        };
        rows.push(RankedRow { rank, event_code: rec[1].to_owned(), score, y });
    }
    Ok(rows)
}

pub fn truth_from_rows(rows: &[RankedRow]) -> TruthVector {
    TruthVector(rows.iter().map(|r| r.y).collect())
}

pub fn write_metrics_csv<W: Write>(writer: W, reports: &[EvalReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.algorithm_id.clone(),
            r.drug_code.clone(),
            r.precision_10.to_string(),
            r.precision_50.to_string(),
            fmt_opt(r.map_all),
            fmt_opt(r.map_rare),
            fmt_opt(r.map_reaction_codes),
            r.n_candidates.to_string(),
            r.n_known_adrs_in_list.to_string(),
            r.dictionary_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(reader: R, file: &str) -> Result<Vec<EvalReport>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    header_check(rdr.headers().map_err(|e| EvalError::csv(file, e))?, &METRICS_COLUMNS, file)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EvalError::csv(file, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |col: &str| EvalError::Malformed { file: file.into(), line, message: format!("bad {col}") };
        let float = |i: usize| rec[i].trim().parse::<f64>().map_err(|_| bad(METRICS_COLUMNS[i]));
        let opt = |i: usize| match rec[i].trim() {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(METRICS_COLUMNS[i])),
        };
        let count = |i: usize| rec[i].trim().parse::<usize>().map_err(|_| bad(METRICS_COLUMNS[i]));
        let n_candidates = count(7)?;
        out.push(EvalReport {
            algorithm_id: rec[0].to_owned(),
            drug_code: rec[1].to_owned(),
            precision_10: float(2)?,
            precision_50: float(3)?,
            map_all: opt(4)?,
            map_rare: opt(5)?,
            map_reaction_codes: opt(6)?,
            n_candidates,
            n_known_adrs_in_list: count(8)?,
            dictionary_size: count(9)?,
            precision_truncated: n_candidates < 50,
        });
    }
    Ok(out)
}

/// Tidy MAP chart rows for the given panels.
pub fn write_chart_csv<W: Write>(writer: W, reports: &[EvalReport], panels: &[TruthMode]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CHART_COLUMNS)?;
    for &mode in panels {
        for r in reports {
            w.write_record([mode.as_str(), &r.drug_code, &r.algorithm_id, &fmt_opt(r.map(mode))])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Drug rows by algorithm columns for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub algorithms: Vec<String>,
    pub drugs: Vec<String>,
    /// `cells[drug][algorithm]`; `None` for a missing report or undefined value.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl MetricTable {
    pub fn build(reports: &[EvalReport], metric: super::Metric) -> MetricTable {
        let algorithms = algorithm_order(reports.iter().map(|r| r.algorithm_id.as_str()));
        let drugs: Vec<String> = reports
            .iter()
            .map(|r| r.drug_code.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect();
        let lookup: BTreeMap<(&str, &str), Option<f64>> = reports
            .iter()
            .map(|r| ((r.drug_code.as_str(), r.algorithm_id.as_str()), r.metric(metric)))
            .collect();
        let cells = drugs
            .iter()
            .map(|d| {
                algorithms
                    .iter()
                    .map(|a| lookup.get(&(d.as_str(), a.as_str())).copied().flatten())
                    .collect()
            })
            .collect();
        MetricTable { algorithms, drugs, cells }
    }

    /// Column means over defined cells.
    pub fn means(&self) -> Vec<Option<f64>> {
        (0..self.algorithms.len())
            .map(|j| {
                let vals: Vec<f64> = self.cells.iter().filter_map(|row| row[j]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    /// Cells that are undefined or missing.
    pub fn gaps(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_none()).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["drug".to_owned()];
        header.extend(self.algorithms.iter().cloned());
        w.write_record(&header)?;
        for (d, row) in self.drugs.iter().zip(&self.cells) {
            let mut rec = vec![d.clone()];
            rec.extend(row.iter().map(|c| fmt_opt(*c)));
            w.write_record(&rec)?;
        }
        let mut mean = vec![MEAN_ROW_LABEL.to_owned()];
        mean.extend(self.means().iter().map(|m| m.map(|v| format!("{v:.3}")).unwrap_or_default()));
        w.write_record(&mean)?;
        w.flush()?;
        Ok(())
    }
}

pub fn ranked_csv_path(dir: &Path, drug_code: &str, algorithm: &str) -> PathBuf {
    dir.join("ranked")
        .join(path_component(drug_code))
        .join(format!("{}.csv", path_component(algorithm)))
}

fn create(path: &Path) -> Result<std::fs::File, EvalError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| EvalError::io(parent, e))?;
    }
    std::fs::File::create(path).map_err(|e| EvalError::io(path, e))
}

fn csv_at(path: &Path) -> impl Fn(csv::Error) -> EvalError + '_ {
    move |e| EvalError::csv(&path.display().to_string(), e)
}

/// Writes one ranked CSV per list, `metrics.csv` and `map_chart.csv` under
/// `dir`, returning the paths written.
pub fn emit_report(
    dir: &Path,
    lists: &[RankedSignalList],
    reports: &[EvalReport],
    dict: &AdrDictionary,
) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = Vec::new();
    for list in lists {
        let path = ranked_csv_path(dir, &list.drug_code, &list.algorithm);
        write_ranked_csv(create(&path)?, list, dict).map_err(csv_at(&path))?;
        written.push(path);
    }
    let path = dir.join("metrics.csv");
    write_metrics_csv(create(&path)?, reports).map_err(csv_at(&path))?;
    written.push(path);
    let path = dir.join("map_chart.csv");
    write_chart_csv(create(&path)?, reports, &TruthMode::ALL).map_err(csv_at(&path))?;
    written.push(path);
    Ok(written)
}
