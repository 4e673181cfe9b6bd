//! Leverage and unexpected leverage (MUTARA) and the leverage/unexlev rank
//! ratio (HUNT).
//!
//! Supports count patients. Exposed patients contribute their first
//! qualifying episode. Patients never prescribed the drug contribute one
//! randomly placed background window whose position depends only on the
//! seed, the drug and the patient id, so results do not depend on
//! iteration order or thread scheduling.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{candidate_event_ids, extract_exposures, first_episode_per_patient, ExposureEpisode, StudyConfig};
use crate::date::{Day, Window};
use crate::ranking::{rank_descending, AlgorithmId, RankedSignalList};
use crate::store::{CodeId, Database, PatientIdx};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportCounts {
    pub supp_x: u64,
    pub supp_seq_unexpected: u64,
    pub supp_seq: u64,
    pub supp_bg_unexpected: u64,
    pub supp_bg: u64,
    pub population: u64,
}

impl SupportCounts {
    pub fn unexlev(&self) -> f64 {
        self.supp_seq_unexpected as f64
            - self.supp_x as f64 * self.supp_bg_unexpected as f64 / self.population as f64
    }

    pub fn leverage(&self) -> f64 {
        self.supp_seq as f64 - self.supp_x as f64 * self.supp_bg as f64 / self.population as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageScores {
    pub event_code: String,
    pub unexlev: f64,
    pub leverage: f64,
    pub rank_unexlev: usize,
    pub rank_leverage: usize,
    pub rank_ratio: f64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream seed for one patient's background draw.
pub fn patient_stream_seed(seed: u64, drug_code: &str, patient_id: &str) -> u64 {
    splitmix(splitmix(seed ^ fnv1a(drug_code.as_bytes())) ^ fnv1a(patient_id.as_bytes()))
}

/// Virtual index day of a never-exposed patient's background window, drawn
/// uniformly from `[registration + 365, last_active − T]`. `None` when the
/// observable span is shorter than `T`.
pub fn background_index(db: &Database, idx: PatientIdx, drug_code: &str, config: &StudyConfig) -> Option<Day> {
    let p = db.patient(idx);
    let lo = p.observable_from();
    let hi = p.last_active - config.risk_window_days;
    if hi < lo {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(patient_stream_seed(config.rng_seed, drug_code, &p.id));
    Some(Day(rng.random_range(lo.0..=hi.0)))
}

/// Predictable-event window: the `pre_window` days directly before the
/// index day, limited to the observable span.
pub fn predictable_window(db: &Database, idx: PatientIdx, index: Day, pre_window_days: i32) -> Window {
    Window::new(index - pre_window_days, index - 1).clip_start(db.patient(idx).observable_from())
}

/// Support tallies for every event code at once.
#[derive(Debug, Clone)]
pub struct SupportTable {
    supp_x: u64,
    population: u64,
    seq: Vec<u64>,
    seq_unexpected: Vec<u64>,
    bg: Vec<u64>,
    bg_unexpected: Vec<u64>,
}

struct Tally<'a> {
    db: &'a Database,
    pre_stamp: Vec<usize>,
    post_stamp: Vec<usize>,
    visit: usize,
}

impl Tally<'_> {
    /// Adds one patient window to `all` / `unexpected`.
    fn add(
        &mut self,
        idx: PatientIdx,
        index: Day,
        config: &StudyConfig,
        all: &mut [u64],
        unexpected: &mut [u64],
    ) {
        self.visit += 1;
        let v = self.visit;
        for ev in self.db.events_in(idx, predictable_window(self.db, idx, index, config.pre_window_days)) {
            self.pre_stamp[ev.code.0 as usize] = v;
        }
        for ev in self.db.events_in(idx, config.risk_window(index)) {
            let c = ev.code.0 as usize;
            if self.post_stamp[c] == v {
                continue;
            }
            self.post_stamp[c] = v;
            all[c] += 1;
            if self.pre_stamp[c] != v {
                unexpected[c] += 1;
            }
        }
    }
}

impl SupportTable {
    /// `exposed` must hold at most one episode per patient.
    pub fn compute(db: &Database, exposed: &[ExposureEpisode], config: &StudyConfig) -> SupportTable {
        let n = db.event_codes().len();
        let mut t = SupportTable {
            supp_x: exposed.len() as u64,
            population: db.n_patients() as u64,
            seq: vec![0; n],
            seq_unexpected: vec![0; n],
            bg: vec![0; n],
            bg_unexpected: vec![0; n],
        };
        let mut tally = Tally {
            db,
            pre_stamp: vec![0; n],
            post_stamp: vec![0; n],
            visit: 0,
        };
        for e in exposed {
            tally.add(e.patient, e.index_date, config, &mut t.seq, &mut t.seq_unexpected);
        }
        let drug = db.drugs().get(&config.drug_code);
        for idx in 0..db.n_patients() as PatientIdx {
            if drug.is_some_and(|d| db.prescriptions_of(idx).iter().any(|r| r.code == d)) {
                continue;
            }
            if let Some(s) = background_index(db, idx, &config.drug_code, config) {
                tally.add(idx, s, config, &mut t.bg, &mut t.bg_unexpected);
            }
        }
        t
    }

    pub fn counts(&self, code: CodeId) -> SupportCounts {
        let c = code.0 as usize;
        let get = |v: &Vec<u64>| v.get(c).copied().unwrap_or(0);
        SupportCounts {
            supp_x: self.supp_x,
            supp_seq_unexpected: get(&self.seq_unexpected),
            supp_seq: get(&self.seq),
            supp_bg_unexpected: get(&self.bg_unexpected) + get(&self.seq_unexpected),
            supp_bg: get(&self.bg) + get(&self.seq),
            population: self.population,
        }
    }
}

fn exposed_patients(db: &Database, config: &StudyConfig) -> Vec<ExposureEpisode> {
    first_episode_per_patient(&extract_exposures(db, config))
}

pub fn support_counts(db: &Database, exposures: &[ExposureEpisode], event_code: &str, config: &StudyConfig) -> SupportCounts {
    let table = SupportTable::compute(db, &first_episode_per_patient(exposures), config);
    match db.event_codes().get(event_code) {
        Some(c) => table.counts(c),
        None => SupportCounts {
            supp_x: table.supp_x,
            population: table.population,
            ..Default::default()
        },
    }
}

pub fn unexlev(db: &Database, exposures: &[ExposureEpisode], event_code: &str, config: &StudyConfig) -> f64 {
    support_counts(db, exposures, event_code, config).unexlev()
}

pub fn leverage(db: &Database, exposures: &[ExposureEpisode], event_code: &str, config: &StudyConfig) -> f64 {
    support_counts(db, exposures, event_code, config).leverage()
}

fn mutara_name(pre_window: i32) -> String {
    match pre_window {
        60 => AlgorithmId::Mutara60.as_str().into(),
        180 => AlgorithmId::Mutara180.as_str().into(),
        n => format!("mutara{n}"),
    }
}

fn hunt_name(pre_window: i32) -> String {
    match pre_window {
        60 => AlgorithmId::Hunt60.as_str().into(),
        180 => AlgorithmId::Hunt180.as_str().into(),
        n => format!("hunt{n}"),
    }
}

/// Both scores and both rank vectors for every candidate.
pub fn leverage_scores(db: &Database, table: &SupportTable, candidates: &[CodeId]) -> Vec<LeverageScores> {
    let codes = db.event_codes();
    rank_scores(
        candidates
            .iter()
            .map(|&c| {
                let s = table.counts(c);
                (codes.name(c).to_owned(), s.unexlev(), s.leverage())
            })
            .collect(),
    )
}

/// Ranks `(event_code, unexlev, leverage)` triples under both scores and
/// forms the leverage/unexlev rank ratio.
pub fn rank_scores(raw: Vec<(String, f64, f64)>) -> Vec<LeverageScores> {
    let ranks = |score: fn(&(String, f64, f64)) -> f64| -> HashMap<String, usize> {
        rank_descending(raw.iter().map(|r| (r.0.clone(), Some(score(r)))).collect())
            .into_iter()
            .map(|r| (r.event_code, r.rank))
            .collect()
    };
    let by_unexlev = ranks(|r| r.1);
    let by_leverage = ranks(|r| r.2);
    raw.iter()
        .map(|(code, unexlev, leverage)| {
            let ru = by_unexlev[code];
            let rl = by_leverage[code];
            LeverageScores {
                event_code: code.clone(),
                unexlev: *unexlev,
                leverage: *leverage,
                rank_unexlev: ru,
                rank_leverage: rl,
                rank_ratio: rl as f64 / ru as f64,
            }
        })
        .collect()
}

pub fn mutara_from_scores(config: &StudyConfig, scores: &[LeverageScores]) -> RankedSignalList {
    RankedSignalList {
        algorithm: mutara_name(config.pre_window_days),
        drug_code: config.drug_code.clone(),
        seed: Some(config.rng_seed),
        entries: rank_descending(scores.iter().map(|s| (s.event_code.clone(), Some(s.unexlev))).collect()),
        filtered: Vec::new(),
    }
}

pub fn hunt_from_scores(config: &StudyConfig, scores: &[LeverageScores]) -> RankedSignalList {
    RankedSignalList {
        algorithm: hunt_name(config.pre_window_days),
        drug_code: config.drug_code.clone(),
        seed: Some(config.rng_seed),
        entries: rank_descending(scores.iter().map(|s| (s.event_code.clone(), Some(s.rank_ratio))).collect()),
        filtered: Vec::new(),
    }
}

fn scores_for(db: &Database, config: &StudyConfig) -> Vec<LeverageScores> {
    let exposures = extract_exposures(db, config);
    let candidates = candidate_event_ids(db, &exposures, config);
    let table = SupportTable::compute(db, &first_episode_per_patient(&exposures), config);
    leverage_scores(db, &table, &candidates)
}

pub fn rank_mutara(db: &Database, config: &StudyConfig) -> RankedSignalList {
    mutara_from_scores(config, &scores_for(db, config))
}

pub fn rank_hunt(db: &Database, config: &StudyConfig) -> RankedSignalList {
    hunt_from_scores(config, &scores_for(db, config))
}

/// Exposed first episodes, exported for callers that share them.
pub fn mutara_exposed(db: &Database, config: &StudyConfig) -> Vec<ExposureEpisode> {
    exposed_patients(db, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximal_signal_algebra() {
        let s = SupportCounts {
            supp_x: 10,
            supp_seq_unexpected: 10,
            supp_seq: 10,
            supp_bg_unexpected: 10,
            supp_bg: 10,
            population: 100,
        };
        assert!((s.unexlev() - 10.0 * (1.0 - 10.0 / 100.0)).abs() < 1e-12);
        assert_eq!(s.unexlev(), s.leverage());
    }

    #[test]
    fn stream_seed_depends_on_all_inputs() {
        let a = patient_stream_seed(1, "X", "p1");
        assert_eq!(a, patient_stream_seed(1, "X", "p1"));
        assert_ne!(a, patient_stream_seed(2, "X", "p1"));
        assert_ne!(a, patient_stream_seed(1, "Y", "p1"));
        assert_ne!(a, patient_stream_seed(1, "X", "p2"));
    }
}
