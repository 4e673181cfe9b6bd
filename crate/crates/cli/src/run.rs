//! The `run` pipeline: one unit per (drug, algorithm), each writing its own
//! files, followed by the cross-unit reports.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use lodsig_core::cohort::{candidate_event_ids, cohort_summary, extract_exposures, first_episode_per_patient, StudyConfig};
use lodsig_core::eval::report::{path_component, ranked_csv_path, write_chart_csv, write_metrics_csv, write_ranked_csv};
use lodsig_core::eval::{compare_algorithms, evaluate, AdrDictionary, EvalReport, Metric, TruthMode};
use lodsig_core::ic::{oe_background, ranked_from_scores, score_oe_with, OeBackground, OeVariant};
use lodsig_core::leverage::{hunt_from_scores, leverage_scores, mutara_from_scores, LeverageScores, SupportTable};
use lodsig_core::ranking::{AlgorithmId, RankedSignalList};
use lodsig_core::srs::{rank_ror_with, SrsCounts};
use lodsig_core::store::Database;
use lodsig_core::synth::generate;
use rayon::prelude::*;

use crate::manifest::{AlgorithmSpec, RunManifest, RESOLVED_MANIFEST};

pub const FILTERED_COLUMNS: [&str; 3] = ["event_code", "score", "reason"];
pub const SIGNIFICANCE_COLUMNS: [&str; 12] = [
    "metric",
    "better",
    "worse",
    "n_drugs",
    "w_plus",
    "p_value",
    "exact",
    "degenerate",
    "p_adjusted",
    "significant",
    "alpha",
    "correction",
];

/// Writes `bytes` to a sibling temporary file and renames it into place,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = parent.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn filtered_path(out: &Path, drug: &str, alg: &str) -> PathBuf {
    out.join("ranked").join(path_component(drug)).join(format!("{}.filtered.csv", path_component(alg)))
}

pub fn eval_path(out: &Path, drug: &str, alg: &str) -> PathBuf {
    out.join("eval").join(path_component(drug)).join(format!("{}.csv", path_component(alg)))
}

/// Lazily filled, shared across workers; each value is computed once.
struct Cache<K, V>(HashMap<K, OnceLock<Arc<V>>>);

impl<K: std::hash::Hash + Eq, V> Cache<K, V> {
    fn new(keys: impl IntoIterator<Item = K>) -> Self {
        Cache(keys.into_iter().map(|k| (k, OnceLock::new())).collect())
    }

    fn get(&self, key: &K, init: impl FnOnce() -> V) -> Arc<V> {
        self.0[key].get_or_init(|| Arc::new(init())).clone()
    }
}

type SrsKey = (i32, bool);
type OeKey = (i32, (u32, u32), bool);

fn srs_key(c: &StudyConfig) -> SrsKey {
    (c.risk_window_days, c.include_day0)
}

fn oe_key(c: &StudyConfig) -> OeKey {
    (c.risk_window_days, c.control_period_months, c.include_day0)
}

/// MUTARA and HUNT share supports when their configurations match.
fn leverage_key(c: &StudyConfig) -> String {
    serde_json::to_string(c).expect("config serializes")
}

struct Shared<'a> {
    manifest: &'a RunManifest,
    db: &'a Database,
    truth: Option<&'a AdrDictionary>,
    srs: Cache<SrsKey, SrsCounts>,
    oe: Cache<OeKey, OeBackground>,
    leverage: Cache<String, Vec<LeverageScores>>,
}

#[derive(Debug, Clone)]
pub struct UnitResult {
    pub drug: String,
    pub algorithm: AlgorithmId,
    pub list: RankedSignalList,
    pub report: Option<EvalReport>,
}

fn rank_unit(ctx: &Shared, config: &StudyConfig, id: AlgorithmId) -> Result<RankedSignalList> {
    let db = ctx.db;
    let exposures = extract_exposures(db, config);
    let candidates = candidate_event_ids(db, &exposures, config);
    let list = match id {
        AlgorithmId::Ror05 => {
            let counts = ctx.srs.get(&srs_key(config), || {
                SrsCounts::compute(db, config.risk_window_days, config.include_day0)
            });
            rank_ror_with(db, config, &counts, &candidates)
        }
        AlgorithmId::Oe1 | AlgorithmId::Oe2 => {
            let variant = if id == AlgorithmId::Oe1 { OeVariant::One } else { OeVariant::Two };
            let bg = ctx.oe.get(&oe_key(config), || oe_background(db, config));
            let scores = score_oe_with(db, config, &exposures, &candidates, &bg, variant)?;
            ranked_from_scores(config, variant, &scores)
        }
        AlgorithmId::Mutara60 | AlgorithmId::Mutara180 | AlgorithmId::Hunt60 | AlgorithmId::Hunt180 => {
            let scores = ctx.leverage.get(&leverage_key(config), || {
                let table = SupportTable::compute(db, &first_episode_per_patient(&exposures), config);
                leverage_scores(db, &table, &candidates)
            });
            if matches!(id, AlgorithmId::Mutara60 | AlgorithmId::Mutara180) {
                mutara_from_scores(config, &scores)
            } else {
                hunt_from_scores(config, &scores)
            }
        }
    };
    Ok(list)
}

fn run_unit(ctx: &Shared, drug: &str, spec: &AlgorithmSpec) -> Result<UnitResult> {
    let started = Instant::now();
    let m = ctx.manifest;
    let config = spec.study_config(&m.study, drug);
    if ctx.db.drugs().get(drug).is_none() {
        bail!("drug {drug:?} has no prescriptions in the database");
    }
    let mut list = rank_unit(ctx, &config, spec.id)?;
    // Outputs are named by manifest id even when overrides change the window.
    list.algorithm = spec.id.as_str().to_owned();

    let empty = AdrDictionary::new();
    let dict = ctx.truth.unwrap_or(&empty);
    let id = spec.id.as_str();
    let ranked = csv_bytes(|b| write_ranked_csv(b, &list, dict))?;
    write_atomic(&ranked_csv_path(&m.output_dir, drug, id), &ranked)?;
    if matches!(spec.id, AlgorithmId::Oe1 | AlgorithmId::Oe2) {
        let filtered = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(FILTERED_COLUMNS)?;
            for f in &list.filtered {
                w.write_record([f.event_code.as_str(), &fmt_score(f.score), f.reason.as_str()])?;
            }
            w.flush()?;
            Ok(())
        })?;
        write_atomic(&filtered_path(&m.output_dir, drug, id), &filtered)?;
    }
    let report = ctx.truth.map(|t| evaluate(&list, t));
    if let Some(r) = &report {
        let row = csv_bytes(|b| write_metrics_csv(b, std::slice::from_ref(r)))?;
        write_atomic(&eval_path(&m.output_dir, drug, id), &row)?;
    }
    info!(
        "{drug}/{id}: {} ranked, {} filtered ({:.2}s)",
        list.len(),
        list.filtered.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(UnitResult { drug: drug.to_owned(), algorithm: spec.id, list, report })
}

fn fmt_score(s: Option<f64>) -> String {
    s.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug)]
pub struct RunOutcome {
    pub units: Vec<UnitResult>,
    pub failures: Vec<(String, AlgorithmId, String)>,
}

impl RunOutcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn load_database(m: &RunManifest) -> Result<(Database, Option<AdrDictionary>)> {
    if let Some(config) = &m.generate {
        let started = Instant::now();
        let data = generate(config).context("generating synthetic data")?;
        let dir = m.output_dir.join("data");
        data.write(&dir).with_context(|| format!("writing {}", dir.display()))?;
        info!(
            "generated {} patients, {} prescriptions, {} events into {} ({:.2}s)",
            data.db.n_patients(),
            data.db.n_prescriptions(),
            data.db.n_events(),
            dir.display(),
            started.elapsed().as_secs_f64()
        );
        let truth = m.evaluate.then_some(data.truth);
        return Ok((data.db, truth));
    }
    let d = &m.database;
    let db = Database::load(&d.prescriptions, &d.events, &d.patients)?;
    if db.duplicates_collapsed() > 0 {
        info!("collapsed {} duplicate rows", db.duplicates_collapsed());
    }
    let truth = match (&m.ground_truth, m.evaluate) {
        (Some(path), true) => Some(AdrDictionary::load(path)?),
        _ => None,
    };
    Ok((db, truth))
}

/// Runs every unit on a pool of `jobs` workers and writes the reports.
pub fn run(m: &RunManifest, jobs: usize) -> Result<RunOutcome> {
    std::fs::create_dir_all(&m.output_dir).with_context(|| format!("creating {}", m.output_dir.display()))?;
    write_atomic(&m.output_dir.join(RESOLVED_MANIFEST), m.echo_toml().as_bytes())?;
    let (db, truth) = load_database(m)?;

    let units = m.units();
    let configs: Vec<(AlgorithmId, StudyConfig)> = units.iter().map(|(d, a)| (a.id, a.study_config(&m.study, d))).collect();
    let ctx = Shared {
        manifest: m,
        db: &db,
        truth: truth.as_ref(),
        srs: Cache::new(configs.iter().filter(|(id, _)| *id == AlgorithmId::Ror05).map(|(_, c)| srs_key(c))),
        oe: Cache::new(
            configs
                .iter()
                .filter(|(id, _)| matches!(id, AlgorithmId::Oe1 | AlgorithmId::Oe2))
                .map(|(_, c)| oe_key(c)),
        ),
        leverage: Cache::new(configs.iter().filter(|(id, _)| id.pre_window_days().is_some()).map(|(_, c)| leverage_key(c))),
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<Result<UnitResult>> =
        pool.install(|| units.par_iter().map(|(drug, spec)| run_unit(&ctx, drug, spec)).collect());

    let mut outcome = RunOutcome { units: Vec::new(), failures: Vec::new() };
    for ((drug, spec), r) in units.iter().zip(results) {
        match r {
            Ok(u) => outcome.units.push(u),
            Err(e) => {
                warn!("{drug}/{}: {e:#}", spec.id);
                outcome.failures.push((drug.clone(), spec.id, format!("{e:#}")));
            }
        }
    }
    write_reports(m, &db, &outcome)?;
    Ok(outcome)
}

fn write_reports(m: &RunManifest, db: &Database, outcome: &RunOutcome) -> Result<()> {
    let out = &m.output_dir;
    let cohort = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        for d in &m.drugs {
            w.serialize(cohort_summary(db, d))?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_atomic(&out.join("cohort.csv"), &cohort)?;

    if !m.evaluate {
        return Ok(());
    }
    let reports: Vec<EvalReport> = outcome.units.iter().filter_map(|u| u.report.clone()).collect();
    write_atomic(&out.join("metrics.csv"), &csv_bytes(|b| write_metrics_csv(b, &reports))?)?;
    write_atomic(&out.join("map_chart.csv"), &csv_bytes(|b| write_chart_csv(b, &reports, &TruthMode::ALL))?)?;

    let algorithms: BTreeSet<&str> = reports.iter().map(|r| r.algorithm_id.as_str()).collect();
    let drugs: BTreeSet<&str> = reports.iter().map(|r| r.drug_code.as_str()).collect();
    let mut matrices = Vec::new();
    if algorithms.len() < 2 || drugs.len() < 2 {
        info!(
            "significance testing skipped: needs two algorithms and two drugs, have {} and {}",
            algorithms.len(),
            drugs.len()
        );
    } else {
        for metric in Metric::ALL {
            let matrix = compare_algorithms(&reports, metric, m.alpha)?;
            let n = matrix.pairs.iter().filter(|p| p.significant).count();
            info!("{}: {n} of {} ordered pairs significant at {}", metric.as_str(), matrix.pairs.len(), m.alpha);
            matrices.push(matrix);
        }
    }
    let sig = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(SIGNIFICANCE_COLUMNS)?;
        for matrix in &matrices {
            for p in &matrix.pairs {
                w.write_record([
                    matrix.metric.as_str().to_owned(),
                    p.better.clone(),
                    p.worse.clone(),
                    p.n_drugs.to_string(),
                    p.test.w_plus.to_string(),
                    p.test.p_value.to_string(),
                    p.test.exact.to_string(),
                    p.test.degenerate.to_string(),
                    p.p_adjusted.to_string(),
                    p.significant.to_string(),
                    matrix.alpha.to_string(),
                    matrix.correction.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    write_atomic(&out.join("significance.csv"), &sig)?;
    Ok(())
}
