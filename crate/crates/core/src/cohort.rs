//! Study configuration, exposure extraction and cohort statistics.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::{Day, Window, MONTH_DAYS, THIRTEEN_MONTHS_DAYS, YEAR_DAYS};
use crate::store::{CodeId, Database, Gender, PatientIdx};

/// Minimum days a patient must remain active after an index prescription.
pub const ACTIVE_FOLLOWUP_DAYS: i32 = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("risk window T must be positive, got {0}")]
    RiskWindow(i32),
    #[error("predictable-event window must be positive, got {0}")]
    PreWindow(i32),
    #[error("control period must start before it ends and end before the index date, got {0} to {1} months prior")]
    ControlPeriod(u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub drug_code: String,
    /// Post-exposure risk window length `T` in days.
    pub risk_window_days: i32,
    /// MUTARA/HUNT predictable-event window in days.
    pub pre_window_days: i32,
    /// Control period as (start, end) months before the index date.
    pub control_period_months: (u32, u32),
    pub rng_seed: u64,
    pub excluded_event_codes: BTreeSet<String>,
    /// Count the prescription day itself as part of the risk window.
    pub include_day0: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            drug_code: String::new(),
            risk_window_days: 30,
            pre_window_days: 60,
            control_period_months: (27, 21),
            rng_seed: 0,
            excluded_event_codes: BTreeSet::new(),
            include_day0: false,
        }
    }
}

impl StudyConfig {
    pub fn for_drug(drug_code: impl Into<String>) -> Self {
        StudyConfig {
            drug_code: drug_code.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.risk_window_days <= 0 {
            return Err(ConfigError::RiskWindow(self.risk_window_days));
        }
        if self.pre_window_days <= 0 {
            return Err(ConfigError::PreWindow(self.pre_window_days));
        }
        let (start, end) = self.control_period_months;
        if start <= end || end == 0 {
            return Err(ConfigError::ControlPeriod(start, end));
        }
        Ok(())
    }

    /// Post-exposure risk window `(index, index+T]`, or `[index, index+T]`
    /// with `include_day0`.
    pub fn risk_window(&self, index: Day) -> Window {
        risk_window(index, self.risk_window_days, self.include_day0)
    }

    /// Control window `[index − start months, index − end months)`.
    pub fn control_window(&self, index: Day) -> Window {
        let (start, end) = self.control_period_months;
        Window::new(
            index - start as i32 * MONTH_DAYS,
            index - end as i32 * MONTH_DAYS - 1,
        )
    }
}

pub fn risk_window(index: Day, t: i32, include_day0: bool) -> Window {
    let start = if include_day0 { index } else { index + 1 };
    Window::new(start, index + t)
}

/// A patient's qualifying first prescription of a drug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExposureEpisode {
    pub patient: PatientIdx,
    pub index_date: Day,
    pub drug: CodeId,
    pub followup_end: Day,
}

impl ExposureEpisode {
    pub fn patient_id<'a>(&self, db: &'a Database) -> &'a str {
        &db.patient(self.patient).id
    }

    pub fn drug_code<'a>(&self, db: &'a Database) -> &'a str {
        db.drugs().name(self.drug)
    }
}

fn qualifies(db: &Database, patient: PatientIdx, day: Day, previous: Option<Day>) -> bool {
    let p = db.patient(patient);
    previous.is_none_or(|prev| day.days_since(prev) > THIRTEEN_MONTHS_DAYS)
        && day.days_since(p.registration) >= YEAR_DAYS
        && p.last_active.days_since(day) >= ACTIVE_FOLLOWUP_DAYS
}

fn check_episode(db: &Database, e: &ExposureEpisode) {
    let p = db.patient(e.patient);
    let prior = Window::new(e.index_date - THIRTEEN_MONTHS_DAYS, e.index_date - 1);
    assert!(
        !db.prescriptions_in(e.patient, prior)
            .iter()
            .any(|r| r.code == e.drug),
        "episode has a same-drug prescription in the prior 13 months"
    );
    assert!(e.index_date.days_since(p.registration) >= YEAR_DAYS);
    assert!(p.last_active.days_since(e.index_date) >= ACTIVE_FOLLOWUP_DAYS);
}

/// Qualifying episodes of one drug, sorted by (patient_id, index_date).
pub fn exposures_for_drug(db: &Database, drug: CodeId, t: i32) -> Vec<ExposureEpisode> {
    let mut out = Vec::new();
    for idx in 0..db.n_patients() as PatientIdx {
        let mut previous = None;
        for rx in db.prescriptions_of(idx).iter().filter(|r| r.code == drug) {
            if qualifies(db, idx, rx.day, previous) {
                out.push(episode(db, idx, drug, rx.day, t));
            }
            previous = Some(rx.day);
        }
    }
    out.iter().for_each(|e| check_episode(db, e));
    out
}

/// Qualifying episodes of every drug in the store, sorted by
/// (patient_id, index_date, drug).
pub fn all_exposures(db: &Database, t: i32) -> Vec<ExposureEpisode> {
    let mut out = Vec::new();
    let mut last_seen: HashMap<CodeId, Day> = HashMap::new();
    for idx in 0..db.n_patients() as PatientIdx {
        last_seen.clear();
        for rx in db.prescriptions_of(idx) {
            let previous = last_seen.insert(rx.code, rx.day);
            if qualifies(db, idx, rx.day, previous) {
                out.push(episode(db, idx, rx.code, rx.day, t));
            }
        }
    }
    out.sort_unstable();
    out
}

fn episode(db: &Database, patient: PatientIdx, drug: CodeId, day: Day, t: i32) -> ExposureEpisode {
    ExposureEpisode {
        patient,
        index_date: day,
        drug,
        followup_end: (day + t).min(db.patient(patient).last_active),
    }
}

/// Episodes of `config.drug_code`; empty when the drug is absent.
pub fn extract_exposures(db: &Database, config: &StudyConfig) -> Vec<ExposureEpisode> {
    match db.drugs().get(&config.drug_code) {
        Some(drug) => exposures_for_drug(db, drug, config.risk_window_days),
        None => Vec::new(),
    }
}

/// Keeps each patient's earliest episode.
pub fn first_episode_per_patient(episodes: &[ExposureEpisode]) -> Vec<ExposureEpisode> {
    let mut out: Vec<ExposureEpisode> = Vec::new();
    for e in episodes {
        match out.last() {
            Some(last) if last.patient == e.patient => {}
            _ => out.push(*e),
        }
    }
    out
}

/// Event codes seen inside the risk window of at least one episode, minus
/// the configured exclusions. Sorted by code name.
pub fn candidate_event_ids(
    db: &Database,
    exposures: &[ExposureEpisode],
    config: &StudyConfig,
) -> Vec<CodeId> {
    let mut seen = vec![false; db.event_codes().len()];
    for e in exposures {
        for ev in db.events_in(e.patient, config.risk_window(e.index_date)) {
            seen[ev.code.0 as usize] = true;
        }
    }
    let codes = db.event_codes();
    let mut out: Vec<CodeId> = codes
        .ids()
        .filter(|c| seen[c.0 as usize] && !config.excluded_event_codes.contains(codes.name(*c)))
        .collect();
    out.sort_by(|a, b| codes.name(*a).cmp(codes.name(*b)));
    out
}

pub fn candidate_events(
    db: &Database,
    exposures: &[ExposureEpisode],
    config: &StudyConfig,
) -> BTreeSet<String> {
    candidate_event_ids(db, exposures, config)
        .into_iter()
        .map(|c| db.event_codes().name(c).to_owned())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub drug_code: String,
    /// All prescriptions including repeats.
    pub total: usize,
    /// Patients with at least one prescription.
    pub first: usize,
    /// Prescriptions with no same-drug prescription in the prior 13 months.
    pub thirteen_month: usize,
    pub mean_age: f64,
    pub sd_age: f64,
    /// Female over male prescriptions; `None` when no male prescriptions.
    pub gender_ratio: Option<f64>,
}

pub fn cohort_summary(db: &Database, drug_code: &str) -> CohortSummary {
    let mut s = CohortSummary {
        drug_code: drug_code.to_owned(),
        total: 0,
        first: 0,
        thirteen_month: 0,
        mean_age: f64::NAN,
        sd_age: f64::NAN,
        gender_ratio: None,
    };
    let Some(drug) = db.drugs().get(drug_code) else {
        return s;
    };
    let mut ages = Vec::new();
    let (mut females, mut males) = (0usize, 0usize);
    for idx in 0..db.n_patients() as PatientIdx {
        let p = db.patient(idx);
        let mut previous: Option<Day> = None;
        for rx in db.prescriptions_of(idx).iter().filter(|r| r.code == drug) {
            s.total += 1;
            if previous.is_none() {
                s.first += 1;
            }
            if previous.is_none_or(|prev| rx.day.days_since(prev) > THIRTEEN_MONTHS_DAYS) {
                s.thirteen_month += 1;
            }
            previous = Some(rx.day);
            ages.push(f64::from(rx.day.year() - p.year_of_birth));
            match p.gender {
                Gender::Female => females += 1,
                Gender::Male => males += 1,
                Gender::Unknown => {}
            }
        }
    }
    if !ages.is_empty() {
        let n = ages.len() as f64;
        let mean = ages.iter().sum::<f64>() / n;
        let var = if ages.len() > 1 {
            ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        s.mean_age = mean;
        s.sd_age = var.sqrt();
    }
    if males > 0 {
        s.gender_ratio = Some(females as f64 / males as f64);
    }
    s
}
