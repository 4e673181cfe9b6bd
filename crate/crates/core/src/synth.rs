//! Seeded synthetic longitudinal databases with injected drug-event
//! associations and their ground truth.
//!
//! Each patient is generated from its own random stream derived from the
//! seed and the patient's position, so output does not depend on the order
//! patients are produced in. Background events are homogeneous Poisson
//! processes per code; drug courses start as a Poisson process with repeat
//! prescriptions every 28 days. Injections act on course initiations, i.e.
//! prescriptions with no prescription of the same drug in the prior 13
//! months.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::{Day, Window, MONTH_DAYS, THIRTEEN_MONTHS_DAYS, YEAR_DAYS};
use crate::eval::{AdrDictionary, AdrEntry, FrequencyClass};
use crate::store::{Database, EventRecord, Gender, PatientIdx, PatientRecord, PrescriptionRecord, StoreError};

pub const REPEAT_INTERVAL_DAYS: i32 = 28;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// Raised rate inside the latency window after a course starts.
    Adr,
    /// Paired occurrences before and after a course starts.
    TherapeuticFailure,
    /// Occurrence recorded on the prescription day, plus the same excess
    /// inside the latency window.
    Day0Artifact,
}

impl InjectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InjectionKind::Adr => "adr",
            InjectionKind::TherapeuticFailure => "therapeutic_failure",
            InjectionKind::Day0Artifact => "day0_artifact",
        }
    }

    /// Whether the injection is a known reaction in the ground truth.
    pub fn is_reaction(self) -> bool {
        !matches!(self, InjectionKind::TherapeuticFailure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrugModel {
    pub drug_code: String,
    /// Treatment courses started per patient-year.
    pub prescription_rate: f64,
    /// Event that prompts the prescription and its rate multiplier over
    /// the month before a course starts.
    #[serde(default)]
    pub indication_event: Option<(String, f64)>,
    /// Mean number of repeat prescriptions per course.
    #[serde(default)]
    pub repeat_rate: f64,
}

fn default_prior_window() -> (i32, i32) {
    (60, 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub drug_code: String,
    pub event_code: String,
    pub relative_risk: f64,
    pub latency_window_days: i32,
    pub kind: InjectionKind,
    /// Absolute excess per patient-year inside the latency window, used
    /// instead of the relative risk (needed when the background rate is 0).
    #[serde(default)]
    pub excess_rate_per_year: Option<f64>,
    /// Days before the index holding a therapeutic failure's prior
    /// occurrence, as (farthest, nearest).
    #[serde(default = "default_prior_window")]
    pub prior_window_days: (i32, i32),
}

impl Injection {
    pub fn adr(drug: &str, event: &str, relative_risk: f64) -> Injection {
        Injection {
            drug_code: drug.into(),
            event_code: event.into(),
            relative_risk,
            latency_window_days: 30,
            kind: InjectionKind::Adr,
            excess_rate_per_year: None,
            prior_window_days: default_prior_window(),
        }
    }

    pub fn with_kind(mut self, kind: InjectionKind) -> Injection {
        self.kind = kind;
        self
    }

    /// Window in which the injected occurrences are counted.
    pub fn window(&self, index: Day) -> Window {
        let start = if self.kind == InjectionKind::Day0Artifact { index } else { index + 1 };
        Window::new(start, index + self.latency_window_days)
    }

    fn excess_mean(&self, background_per_year: f64) -> f64 {
        let per_year = self
            .excess_rate_per_year
            .unwrap_or((self.relative_risk - 1.0) * background_per_year);
        per_year / YEAR_DAYS as f64 * self.latency_window_days as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub years_span: u32,
    pub start_year: i32,
    /// Events per patient-year by code.
    pub background_event_rates: BTreeMap<String, f64>,
    pub drugs: Vec<DrugModel>,
    pub injections: Vec<Injection>,
    pub rng_seed: u64,
    /// Registrations fall uniformly in the first `registration_spread`
    /// fraction of the span.
    pub registration_spread: f64,
    /// Per patient-year.
    pub transfer_out_rate: f64,
    /// Per patient-year.
    pub mortality_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 1000,
            years_span: 5,
            start_year: 2005,
            background_event_rates: BTreeMap::new(),
            drugs: Vec::new(),
            injections: Vec::new(),
            rng_seed: 0,
            registration_spread: 0.5,
            transfer_out_rate: 0.02,
            mortality_rate: 0.01,
        }
    }
}

impl SynthConfig {
    /// Small three-drug database exercising every injection kind.
    pub fn demo() -> SynthConfig {
        let mut rates = BTreeMap::new();
        for i in 1..=24 {
            rates.insert(format!("EV{i:02}"), 0.1 + 0.025 * (i % 8) as f64);
        }
        for (code, rate) in [("ADR_A1", 0.2), ("ADR_A2", 0.15), ("ADR_B1", 0.2), ("ADR_B2", 0.1)] {
            rates.insert(code.to_owned(), rate);
        }
        for (code, rate) in [("FAIL_A", 0.2), ("RASH_D0", 0.1), ("IND_B", 0.3), ("IND_A", 0.3)] {
            rates.insert(code.to_owned(), rate);
        }
        SynthConfig {
            n_patients: 5000,
            background_event_rates: rates,
            drugs: vec![
                DrugModel {
                    drug_code: "DRUG_A".into(),
                    prescription_rate: 0.15,
                    indication_event: Some(("IND_A".into(), 4.0)),
                    repeat_rate: 2.0,
                },
                DrugModel {
                    drug_code: "DRUG_B".into(),
                    prescription_rate: 0.15,
                    indication_event: Some(("IND_B".into(), 4.0)),
                    repeat_rate: 1.0,
                },
                DrugModel {
                    drug_code: "DRUG_C".into(),
                    prescription_rate: 0.3,
                    indication_event: None,
                    repeat_rate: 3.0,
                },
            ],
            injections: vec![
                Injection::adr("DRUG_A", "ADR_A1", 6.0),
                Injection::adr("DRUG_A", "ADR_A2", 4.0),
                Injection::adr("DRUG_A", "FAIL_A", 6.0).with_kind(InjectionKind::TherapeuticFailure),
                Injection::adr("DRUG_A", "RASH_D0", 6.0).with_kind(InjectionKind::Day0Artifact),
                Injection::adr("DRUG_B", "ADR_B1", 5.0),
                Injection::adr("DRUG_B", "ADR_B2", 8.0),
            ],
            rng_seed: 1,
            ..SynthConfig::default()
        }
    }

    /// Fifty thousand patients, one studied drug `X` with five ADRs at
    /// relative risk 4 (`ADR1`..`ADR5`), four rate-matched noise codes per
    /// ADR, a therapeutic failure `FAIL`, a day-of-prescription reaction
    /// `DAY0` and an indication `IND`. Three other drugs supply the
    /// any-drug background.
    pub fn recovery_benchmark() -> SynthConfig {
        let mut rates = BTreeMap::new();
        let mut injections = Vec::new();
        for (i, rate) in [0.1, 0.15, 0.2, 0.25, 0.3].into_iter().enumerate() {
            let adr = format!("ADR{}", i + 1);
            rates.insert(adr.clone(), rate);
            for k in 0..4 {
                rates.insert(format!("NOISE{:02}", i * 4 + k + 1), rate);
            }
            injections.push(Injection::adr("X", &adr, 4.0));
        }
        rates.insert("FAIL".into(), 0.2);
        rates.insert("IND".into(), 0.3);
        rates.insert("DAY0".into(), 0.15);
        injections.push(Injection::adr("X", "FAIL", 6.0).with_kind(InjectionKind::TherapeuticFailure));
        injections.push(Injection::adr("X", "DAY0", 4.0).with_kind(InjectionKind::Day0Artifact));
        let drug = |code: &str, rate: f64, repeats: f64| DrugModel {
            drug_code: code.into(),
            prescription_rate: rate,
            indication_event: None,
            repeat_rate: repeats,
        };
        SynthConfig {
            n_patients: 50_000,
            background_event_rates: rates,
            drugs: vec![
                DrugModel { indication_event: Some(("IND".into(), 4.0)), ..drug("X", 0.2, 2.0) },
                drug("D1", 0.3, 2.0),
                drug("D2", 0.2, 1.0),
                drug("D3", 0.3, 3.0),
            ],
            injections,
            rng_seed: 1,
            ..SynthConfig::default()
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.n_patients == 0 {
            return bad("n_patients must be positive".into());
        }
        if self.years_span == 0 {
            return bad("years_span must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.registration_spread) {
            return bad(format!("registration_spread {} outside [0, 1]", self.registration_spread));
        }
        for (what, v) in [("transfer_out_rate", self.transfer_out_rate), ("mortality_rate", self.mortality_rate)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{what} must be a non-negative number, got {v}"));
            }
        }
        for (code, r) in &self.background_event_rates {
            if !(*r >= 0.0 && r.is_finite()) {
                return bad(format!("background rate for {code:?} must be non-negative, got {r}"));
            }
        }
        let mut drugs = BTreeSet::new();
        for d in &self.drugs {
            if !drugs.insert(d.drug_code.as_str()) {
                return bad(format!("drug {:?} listed twice", d.drug_code));
            }
            if !(d.prescription_rate >= 0.0 && d.repeat_rate >= 0.0) {
                return bad(format!("rates for drug {:?} must be non-negative", d.drug_code));
            }
            if let Some((code, mult)) = &d.indication_event {
                if !(*mult >= 1.0) {
                    return bad(format!("indication multiplier for {code:?} must be at least 1"));
                }
            }
        }
        for inj in &self.injections {
            let name = format!("{}/{}", inj.drug_code, inj.event_code);
            if !drugs.contains(inj.drug_code.as_str()) {
                return bad(format!("injection {name}: unknown drug"));
            }
            if !(inj.relative_risk >= 1.0) {
                return bad(format!("injection {name}: relative_risk must be at least 1"));
            }
            if inj.kind == InjectionKind::Adr && !(1..=30).contains(&inj.latency_window_days) {
                return bad(format!("injection {name}: adr latency window must be within (0, 30]"));
            }
            if inj.latency_window_days < 1 {
                return bad(format!("injection {name}: latency window must be positive"));
            }
            if inj.excess_rate_per_year.is_some_and(|r| !(r >= 0.0)) {
                return bad(format!("injection {name}: excess_rate_per_year must be non-negative"));
            }
            let (far, near) = inj.prior_window_days;
            if !(near >= 1 && far >= near) {
                return bad(format!("injection {name}: prior window must satisfy far >= near >= 1"));
            }
        }
        Ok(())
    }

    fn start(&self) -> Day {
        Day::from_ymd(self.start_year, 1, 1).expect("valid start year")
    }

    fn span_days(&self) -> i32 {
        self.years_span as i32 * YEAR_DAYS
    }
}

/// Generator-side bookkeeping for one injection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionTally {
    pub drug_code: String,
    pub event_code: String,
    pub kind: InjectionKind,
    pub initiations: u64,
    /// Occurrences added by the injection before same-day collapsing.
    pub injected: u64,
    /// Occurrences of the event inside the injection window after every
    /// initiation, background included, as written to the database.
    pub in_window: u64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub db: Database,
    pub truth: AdrDictionary,
    pub tallies: Vec<InjectionTally>,
}

impl SynthData {
    /// Writes the three database CSVs and `ground_truth.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        self.db.write_csv(dir)?;
        let path = dir.join("ground_truth.csv");
        let file = std::fs::File::create(&path).map_err(|source| SynthError::Io {
            file: path.display().to_string(),
            source,
        })?;
        self.truth.write_csv(file).map_err(|source| SynthError::Csv {
            file: path.display().to_string(),
            source,
        })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Days of the first prescription in each 13-month-free run.
fn initiations(days: &[Day]) -> Vec<Day> {
    let mut out = Vec::new();
    let mut prev: Option<Day> = None;
    for &d in days {
        if prev.is_none_or(|p| d.days_since(p) > THIRTEEN_MONTHS_DAYS) {
            out.push(d);
        }
        prev = Some(d);
    }
    out
}

struct Shared<'a> {
    config: &'a SynthConfig,
    event_codes: Vec<&'a str>,
    event_index: HashMap<&'a str, usize>,
    rates: Vec<f64>,
    injections_by_drug: Vec<Vec<usize>>,
}

struct GeneratedPatient {
    record: PatientRecord,
    /// (drug position, day)
    prescriptions: Vec<(usize, Day)>,
    /// (day, event position), sorted and distinct.
    events: Vec<(Day, usize)>,
    injected: Vec<u64>,
}

fn generate_patient(shared: &Shared, pos: usize, id: String) -> GeneratedPatient {
    let config = shared.config;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(config.rng_seed ^ splitmix(pos as u64)));
    let start = config.start();
    let end = start + (config.span_days() - 1);
    let spread = (config.span_days() as f64 * config.registration_spread) as i32;
    let registration = start + rng.random_range(0..=spread.min(config.span_days() - 1));
    let draw_exit = |rng: &mut ChaCha8Rng, per_year: f64| -> Option<i32> {
        Exp::new(per_year / YEAR_DAYS as f64).ok().map(|e| e.sample(rng) as i32)
    };
    let transfer = draw_exit(&mut rng, config.transfer_out_rate);
    let death = draw_exit(&mut rng, config.mortality_rate);
    let mut exit = end;
    let mut died = false;
    if let Some(t) = transfer.filter(|&t| t < 1_000_000) {
        exit = exit.min(registration + t);
    }
    if let Some(d) = death.filter(|&d| d < 1_000_000) {
        if registration + d <= exit {
            exit = registration + d;
            died = true;
        }
    }
    let age = rng.random_range(18..=90);
    let gender = match rng.random::<f64>() {
        x if x < 0.49 => Gender::Female,
        x if x < 0.98 => Gender::Male,
        _ => Gender::Unknown,
    };
    let span = exit.days_since(registration) + 1;
    let years = span as f64 / YEAR_DAYS as f64;
    let uniform_day = |rng: &mut ChaCha8Rng| registration + rng.random_range(0..span);

    let mut events: Vec<(Day, usize)> = Vec::new();
    for (e, &rate) in shared.rates.iter().enumerate() {
        for _ in 0..poisson(&mut rng, rate * years) {
            events.push((uniform_day(&mut rng), e));
        }
    }

    let mut prescriptions = Vec::new();
    let mut injected = vec![0u64; config.injections.len()];
    let observed = Window::new(registration, exit);
    let add = |events: &mut Vec<(Day, usize)>, day: Day, code: usize| -> bool {
        if observed.contains(day) {
            events.push((day, code));
            true
        } else {
            false
        }
    };
    for (d, drug) in config.drugs.iter().enumerate() {
        let mut days = Vec::new();
        for _ in 0..poisson(&mut rng, drug.prescription_rate * years) {
            let first = uniform_day(&mut rng);
            let repeats = poisson(&mut rng, drug.repeat_rate) as i32;
            days.extend((0..=repeats).map(|k| first + k * REPEAT_INTERVAL_DAYS).filter(|&x| x <= exit));
        }
        days.sort_unstable();
        days.dedup();
        for index in initiations(&days) {
            if let Some((code, mult)) = &drug.indication_event {
                let e = shared.event_index[code.as_str()];
                let mean = (mult - 1.0) * shared.rates[e] / YEAR_DAYS as f64 * MONTH_DAYS as f64;
                for _ in 0..poisson(&mut rng, mean) {
                    let day = index - rng.random_range(1..=MONTH_DAYS);
                    add(&mut events, day, e);
                }
                for _ in 0..poisson(&mut rng, mean / 4.0) {
                    let day = index + rng.random_range(1..=MONTH_DAYS);
                    add(&mut events, day, e);
                }
            }
            for &j in &shared.injections_by_drug[d] {
                let inj = &config.injections[j];
                let e = shared.event_index[inj.event_code.as_str()];
                let mean = inj.excess_mean(shared.rates[e]);
                let latency = |rng: &mut ChaCha8Rng| index + rng.random_range(1..=inj.latency_window_days);
                let mut n = 0;
                match inj.kind {
                    InjectionKind::Adr => {
                        for _ in 0..poisson(&mut rng, mean) {
                            let day = latency(&mut rng);
                            n += u64::from(add(&mut events, day, e));
                        }
                    }
                    InjectionKind::TherapeuticFailure => {
                        let (far, near) = inj.prior_window_days;
                        for _ in 0..poisson(&mut rng, mean) {
                            let before = index - rng.random_range(near..=far);
                            let after = latency(&mut rng);
                            n += u64::from(add(&mut events, before, e));
                            n += u64::from(add(&mut events, after, e));
                        }
                    }
                    InjectionKind::Day0Artifact => {
                        for _ in 0..poisson(&mut rng, mean) {
                            n += u64::from(add(&mut events, index, e));
                        }
                        for _ in 0..poisson(&mut rng, mean) {
                            let day = latency(&mut rng);
                            n += u64::from(add(&mut events, day, e));
                        }
                    }
                }
                injected[j] += n;
            }
        }
        prescriptions.extend(days.into_iter().map(|day| (d, day)));
    }
    events.sort_unstable();
    events.dedup();

    GeneratedPatient {
        record: PatientRecord {
            patient_id: id,
            year_of_birth: config.start_year - age,
            gender,
            registration_date: registration,
            death_date: died.then_some(exit),
        },
        prescriptions,
        events,
        injected,
    }
}

/// Occurrences of `event` in the injection window after each initiation.
fn count_in_windows(inj: &Injection, starts: &[Day], events: impl Iterator<Item = Day> + Clone) -> u64 {
    starts
        .iter()
        .map(|&s| {
            let w = inj.window(s);
            events.clone().filter(|d| w.contains(*d)).count() as u64
        })
        .sum()
}

pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let mut codes: BTreeSet<&str> = config.background_event_rates.keys().map(String::as_str).collect();
    codes.extend(config.injections.iter().map(|i| i.event_code.as_str()));
    codes.extend(config.drugs.iter().filter_map(|d| d.indication_event.as_ref().map(|(c, _)| c.as_str())));
    let event_codes: Vec<&str> = codes.into_iter().collect();
    let event_index: HashMap<&str, usize> = event_codes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let rates = event_codes
        .iter()
        .map(|c| config.background_event_rates.get(*c).copied().unwrap_or(0.0))
        .collect();
    let injections_by_drug = config
        .drugs
        .iter()
        .map(|d| {
            (0..config.injections.len())
                .filter(|&j| config.injections[j].drug_code == d.drug_code)
                .collect()
        })
        .collect();
    let shared = Shared { config, event_codes, event_index, rates, injections_by_drug };

    let width = config.n_patients.to_string().len();
    let mut tallies: Vec<InjectionTally> = config
        .injections
        .iter()
        .map(|inj| InjectionTally {
            drug_code: inj.drug_code.clone(),
            event_code: inj.event_code.clone(),
            kind: inj.kind,
            initiations: 0,
            injected: 0,
            in_window: 0,
        })
        .collect();
    let mut patients = Vec::with_capacity(config.n_patients);
    let mut prescriptions = Vec::new();
    let mut events = Vec::new();
    for pos in 0..config.n_patients {
        let g = generate_patient(&shared, pos, format!("P{:0width$}", pos + 1));
        for (j, inj) in config.injections.iter().enumerate() {
            let d = config.drugs.iter().position(|m| m.drug_code == inj.drug_code).expect("validated");
            let days: Vec<Day> = g.prescriptions.iter().filter(|(x, _)| *x == d).map(|(_, day)| *day).collect();
            let starts = initiations(&days);
            let e = shared.event_index[inj.event_code.as_str()];
            let t = &mut tallies[j];
            t.initiations += starts.len() as u64;
            t.injected += g.injected[j];
            t.in_window += count_in_windows(inj, &starts, g.events.iter().filter(|(_, c)| *c == e).map(|(day, _)| *day));
        }
        let id = &g.record.patient_id;
        prescriptions.extend(g.prescriptions.iter().map(|&(d, date)| PrescriptionRecord {
            patient_id: id.clone(),
            drug_code: config.drugs[d].drug_code.clone(),
            date,
        }));
        events.extend(g.events.iter().map(|&(date, e)| EventRecord {
            patient_id: id.clone(),
            event_code: shared.event_codes[e].to_owned(),
            date,
        }));
        patients.push(g.record);
    }
    let db = Database::from_records(patients, prescriptions, events)?;
    let truth = realized_truth(&db, config);
    Ok(SynthData { db, truth, tallies })
}

/// Post-exposure recount of one injection against the background
/// expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedInjection {
    pub drug_code: String,
    pub event_code: String,
    pub kind: InjectionKind,
    pub initiations: u64,
    pub observed: u64,
    pub expected_background: f64,
}

impl RealizedInjection {
    pub fn excess(&self) -> f64 {
        self.observed as f64 - self.expected_background
    }

    /// Realized excess per initiation.
    pub fn incidence(&self) -> f64 {
        if self.initiations == 0 {
            0.0
        } else {
            self.excess() / self.initiations as f64
        }
    }
}

pub fn realized_injections(db: &Database, config: &SynthConfig) -> Vec<RealizedInjection> {
    config
        .injections
        .iter()
        .map(|inj| {
            let mut r = RealizedInjection {
                drug_code: inj.drug_code.clone(),
                event_code: inj.event_code.clone(),
                kind: inj.kind,
                initiations: 0,
                observed: 0,
                expected_background: 0.0,
            };
            let (Some(drug), event) = (db.drugs().get(&inj.drug_code), db.event_codes().get(&inj.event_code)) else {
                return r;
            };
            let daily = config.background_event_rates.get(&inj.event_code).copied().unwrap_or(0.0) / YEAR_DAYS as f64;
            for idx in 0..db.n_patients() as PatientIdx {
                let days: Vec<Day> =
                    db.prescriptions_of(idx).iter().filter(|e| e.code == drug).map(|e| e.day).collect();
                let starts = initiations(&days);
                r.initiations += starts.len() as u64;
                for &s in &starts {
                    let w = inj.window(s);
                    r.expected_background += daily * (w.end.days_since(w.start) + 1) as f64;
                    if let Some(code) = event {
                        r.observed += db.events_in(idx, w).iter().filter(|e| e.code == code).count() as u64;
                    }
                }
            }
            r
        })
        .collect()
}

/// Frequency class from the position of an incidence among `n` sorted
/// ascending: lowest third rare, middle less frequent, top frequent.
pub fn tercile_class(position: usize, n: usize) -> FrequencyClass {
    match 3 * position / n.max(1) {
        0 => FrequencyClass::Rare,
        1 => FrequencyClass::LessFrequent,
        _ => FrequencyClass::Frequent,
    }
}

/// Ground truth from the injections that visibly manifested. Reaction
/// injections whose realized count does not exceed the background
/// expectation are dropped with a warning.
pub fn realized_truth(db: &Database, config: &SynthConfig) -> AdrDictionary {
    let mut kept: Vec<RealizedInjection> = Vec::new();
    for r in realized_injections(db, config) {
        if r.excess() <= 0.0 {
            warn!(
                "injection {}/{} ({}) did not manifest: {} observed vs {:.1} expected",
                r.drug_code,
                r.event_code,
                r.kind.as_str(),
                r.observed,
                r.expected_background
            );
            continue;
        }
        if r.kind.is_reaction() {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| {
        a.incidence()
            .total_cmp(&b.incidence())
            .then_with(|| (&a.drug_code, &a.event_code).cmp(&(&b.drug_code, &b.event_code)))
    });
    let n = kept.len();
    let mut dict = AdrDictionary::new();
    for (i, r) in kept.iter().enumerate() {
        dict.insert(
            &r.drug_code,
            &r.event_code,
            AdrEntry {
                frequency_class: tercile_class(i, n),
                is_reaction_code: r.kind == InjectionKind::Day0Artifact,
            },
        );
    }
    dict
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SynthConfig {
        SynthConfig {
            n_patients: 300,
            background_event_rates: [("A".to_owned(), 0.5), ("B".to_owned(), 0.0)].into_iter().collect(),
            drugs: vec![DrugModel {
                drug_code: "X".into(),
                prescription_rate: 0.5,
                indication_event: None,
                repeat_rate: 1.0,
            }],
            injections: vec![Injection {
                excess_rate_per_year: Some(12.0),
                ..Injection::adr("X", "B", 1.0)
            }],
            rng_seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn tally_matches_database_recount() {
        let out = generate(&tiny()).unwrap();
        let realized = realized_injections(&out.db, &tiny());
        assert_eq!(realized[0].observed, out.tallies[0].in_window);
        assert_eq!(realized[0].initiations, out.tallies[0].initiations);
        assert!(out.tallies[0].injected > 0);
    }

    #[test]
    fn zero_background_injection_stays_in_window() {
        let out = generate(&tiny()).unwrap();
        let b = out.db.event_codes().get("B").unwrap();
        let total: usize = (0..out.db.n_patients() as PatientIdx)
            .map(|i| out.db.events_of(i).iter().filter(|e| e.code == b).count())
            .sum();
        assert_eq!(total as u64, out.tallies[0].in_window);
        assert!(out.truth.get("X", "B").is_some());
    }

    #[test]
    fn terciles() {
        let classes: Vec<_> = (0..6).map(|i| tercile_class(i, 6)).collect();
        use FrequencyClass::*;
        assert_eq!(classes, [Rare, Rare, LessFrequent, LessFrequent, Frequent, Frequent]);
        assert_eq!(tercile_class(0, 1), Rare);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = tiny();
        c.injections[0].relative_risk = 0.5;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.injections[0].latency_window_days = 45;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.injections[0].drug_code = "Y".into();
        assert!(c.validate().is_err());
        assert!(SynthConfig::demo().validate().is_ok());
    }
}
