//! wasm-bindgen exports behind `www/index.html`. Each export returns a JSON
//! string; the plain functions underneath are what the native tests call.

use lodsig_core::cohort::StudyConfig;
use lodsig_core::eval::{map_score, truth_vector, TruthMode};
use lodsig_core::ic::{ic, ic_credibility_bounds, rank_oe, OeVariant};
use lodsig_core::leverage::{rank_hunt, rank_mutara};
use lodsig_core::ranking::{AlgorithmId, RankedSignalList};
use lodsig_core::srs::{ror, ror05, rank_ror, ContingencyTable};
use lodsig_core::synth::{generate, SynthConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct IcPoint {
    pub n: f64,
    pub ic: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Shrunk IC with its 95% credibility interval for `n = 0..=n_max`
/// observed against a fixed expected count.
pub fn ic_points(expected: f64, n_max: u32) -> Result<Vec<IcPoint>, String> {
    (0..=n_max)
        .map(|n| {
            let n = f64::from(n);
            let (lo, hi) = ic_credibility_bounds(n, expected, 0.025, 0.975).map_err(|e| e.to_string())?;
            Ok(IcPoint { n, ic: ic(n, expected), lo, hi })
        })
        .collect()
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RorRow {
    pub ror: Option<f64>,
    pub ror05: Option<f64>,
    pub corrected: bool,
}

pub fn ror_row(w00: u64, w01: u64, w10: u64, w11: u64) -> RorRow {
    let t = ContingencyTable::new(w00, w01, w10, w11);
    RorRow { ror: ror(&t, true), ror05: ror05(&t, true), corrected: t.has_zero_cell() }
}

#[derive(Debug, Serialize)]
pub struct Entry {
    pub rank: usize,
    pub event_code: String,
    pub score: Option<f64>,
    pub known: bool,
}

#[derive(Debug, Serialize)]
pub struct AlgorithmResult {
    pub algorithm: String,
    pub map_all: Option<f64>,
    pub top: Vec<Entry>,
    pub filtered: usize,
}

#[derive(Debug, Serialize)]
pub struct Simulation {
    pub drug: String,
    pub exposed_patients: usize,
    pub truth: Vec<String>,
    pub results: Vec<AlgorithmResult>,
}

fn rank(db: &lodsig_core::Database, id: AlgorithmId, config: &StudyConfig) -> Result<RankedSignalList, String> {
    let config = StudyConfig { pre_window_days: id.pre_window_days().unwrap_or(config.pre_window_days), ..config.clone() };
    Ok(match id {
        AlgorithmId::Oe1 => rank_oe(db, &config, OeVariant::One).map_err(|e| e.to_string())?,
        AlgorithmId::Oe2 => rank_oe(db, &config, OeVariant::Two).map_err(|e| e.to_string())?,
        AlgorithmId::Mutara60 | AlgorithmId::Mutara180 => rank_mutara(db, &config),
        AlgorithmId::Hunt60 | AlgorithmId::Hunt180 => rank_hunt(db, &config),
        AlgorithmId::Ror05 => rank_ror(db, &config),
    })
}

/// Generates the demo database with the first ADR of `DRUG_A` set to
/// `relative_risk`, then ranks `DRUG_A` with all seven algorithms.
pub fn run_simulation(n_patients: usize, relative_risk: f64, seed: u64, top: usize) -> Result<Simulation, String> {
    let mut config = SynthConfig { n_patients, rng_seed: seed, ..SynthConfig::demo() };
    if let Some(inj) = config.injections.iter_mut().find(|i| i.event_code == "ADR_A1") {
        inj.relative_risk = relative_risk;
    }
    let data = generate(&config).map_err(|e| e.to_string())?;
    let drug = "DRUG_A";
    let study = StudyConfig { rng_seed: seed, ..StudyConfig::for_drug(drug) };
    let exposed_patients = {
        let mut ids: Vec<_> = lodsig_core::extract_exposures(&data.db, &study).iter().map(|e| e.patient).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    let mut results = Vec::new();
    for id in AlgorithmId::ALL {
        let list = rank(&data.db, id, &study)?;
        let y = truth_vector(&list, &data.truth, TruthMode::All);
        results.push(AlgorithmResult {
            algorithm: id.to_string(),
            map_all: map_score(&y),
            top: list
                .entries
                .iter()
                .zip(&y.0)
                .take(top)
                .map(|(e, &known)| Entry { rank: e.rank, event_code: e.event_code.clone(), score: e.score, known })
                .collect(),
            filtered: list.filtered.len(),
        });
    }
    let truth = data.truth.entries_for(drug).map(|(e, _)| e.to_owned()).collect();
    Ok(Simulation { drug: drug.into(), exposed_patients, truth, results })
}

fn to_json<T: Serialize>(v: Result<T, String>) -> Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn ic_curve(expected: f64, n_max: u32) -> Result<String, JsError> {
    to_json(ic_points(expected, n_max))
}

#[wasm_bindgen]
pub fn ror_table(w00: u32, w01: u32, w10: u32, w11: u32) -> Result<String, JsError> {
    to_json(Ok(ror_row(w00.into(), w01.into(), w10.into(), w11.into())))
}

#[wasm_bindgen]
pub fn simulate(n_patients: u32, relative_risk: f64, seed: u32) -> Result<String, JsError> {
    to_json(run_simulation(n_patients as usize, relative_risk, seed.into(), 10))
}
