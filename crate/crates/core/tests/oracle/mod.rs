//! Brute-force reference counts computed straight from raw record rows,
//! without the store's indexes. Shared by the core integration tests and
//! the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeSet;

use lodsig_core::date::Day;
use lodsig_core::leverage::patient_stream_seed;
use lodsig_core::srs::ContingencyTable;
use lodsig_core::store::{EventRecord, Gender, PatientRecord, PrescriptionRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DRUGS: [&str; 3] = ["X", "Y", "Z"];
pub const EVENTS: [&str; 5] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone)]
pub struct Raw {
    pub patients: Vec<PatientRecord>,
    pub rx: Vec<PrescriptionRecord>,
    pub ev: Vec<EventRecord>,
}

/// Small random database dense enough that most windows hold records.
/// Some rows are duplicated on purpose.
pub fn random_raw(seed: u64, n_patients: usize) -> Raw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Day::from_ymd(2000, 1, 1).unwrap();
    let mut raw = Raw { patients: vec![], rx: vec![], ev: vec![] };
    for i in 0..n_patients {
        let id = format!("p{i:02}");
        let reg = base + rng.random_range(0..200);
        let span = rng.random_range(300..2200);
        let death = rng.random_bool(0.2).then(|| reg + span + rng.random_range(0..40));
        raw.patients.push(PatientRecord {
            patient_id: id.clone(),
            year_of_birth: rng.random_range(1930..1990),
            gender: [Gender::Female, Gender::Male, Gender::Unknown][rng.random_range(0..3)],
            registration_date: reg,
            death_date: death,
        });
        for _ in 0..rng.random_range(0..12) {
            let drug = DRUGS[rng.random_range(0..DRUGS.len())];
            let date = reg + rng.random_range(0..=span);
            raw.rx.push(PrescriptionRecord { patient_id: id.clone(), drug_code: drug.into(), date });
            if rng.random_bool(0.3) {
                // Repeat shortly after, sometimes on the same day.
                let date = date + rng.random_range(0..40);
                raw.rx.push(PrescriptionRecord { patient_id: id.clone(), drug_code: drug.into(), date });
            }
        }
        for _ in 0..rng.random_range(0..60) {
            let code = EVENTS[rng.random_range(0..EVENTS.len())];
            let date = reg + rng.random_range(0..=span);
            raw.ev.push(EventRecord { patient_id: id.clone(), event_code: code.into(), date });
        }
        if let (true, Some(r)) = (rng.random_bool(0.3), raw.ev.last().cloned()) {
            raw.ev.push(r);
        }
    }
    raw
}

impl Raw {
    pub fn patient(&self, id: &str) -> &PatientRecord {
        self.patients.iter().find(|p| p.patient_id == id).unwrap()
    }

    pub fn last_active(&self, id: &str) -> Day {
        let p = self.patient(id);
        self.rx
            .iter()
            .filter(|r| r.patient_id == id)
            .map(|r| r.date)
            .chain(self.ev.iter().filter(|e| e.patient_id == id).map(|e| e.date))
            .chain(p.death_date)
            .chain([p.registration_date])
            .max()
            .unwrap()
    }

    /// Distinct (patient, drug, date).
    pub fn prescriptions(&self) -> BTreeSet<(String, String, Day)> {
        self.rx.iter().map(|r| (r.patient_id.clone(), r.drug_code.clone(), r.date)).collect()
    }

    /// Distinct (patient, code, date).
    pub fn events(&self) -> BTreeSet<(String, String, Day)> {
        self.ev.iter().map(|e| (e.patient_id.clone(), e.event_code.clone(), e.date)).collect()
    }

    fn has_event(&self, id: &str, code: &str, lo: Day, hi: Day) -> bool {
        self.ev.iter().any(|e| e.patient_id == id && e.event_code == code && e.date >= lo && e.date <= hi)
    }

    /// Qualifying (patient, drug, index) episodes by the three rules.
    pub fn episodes(&self) -> Vec<(String, String, Day)> {
        let rx = self.prescriptions();
        rx.iter()
            .filter(|(pid, drug, d)| {
                let p = self.patient(pid);
                let fresh = !rx.iter().any(|(q, dr, e)| {
                    q == pid && dr == drug && *e < *d && d.0 - e.0 <= 395
                });
                fresh && d.0 - p.registration_date.0 >= 365 && self.last_active(pid).0 - d.0 >= 30
            })
            .cloned()
            .collect()
    }

    pub fn episodes_of(&self, drug: &str) -> Vec<(String, Day)> {
        self.episodes().into_iter().filter(|(_, d, _)| d == drug).map(|(p, _, i)| (p, i)).collect()
    }

    /// SRS pseudo-report table over post-washout prescriptions.
    pub fn srs_table(&self, drug: &str, event: &str, t: i32) -> ContingencyTable {
        let mut table = ContingencyTable::default();
        let events = self.events();
        for (pid, d, day) in self.prescriptions() {
            if day.0 < self.patient(&pid).registration_date.0 + 365 {
                continue;
            }
            for (q, code, e) in &events {
                if *q != pid || !(e.0 > day.0 && e.0 <= day.0 + t) {
                    continue;
                }
                match (d == drug, code == event) {
                    (true, true) => table.w00 += 1,
                    (true, false) => table.w01 += 1,
                    (false, true) => table.w10 += 1,
                    (false, false) => table.w11 += 1,
                }
            }
        }
        table
    }

    /// `(n_xy, n_x_dot, n_dot_y, n_dot_dot)` for a period given as closed
    /// offsets from the index date.
    pub fn period_counts(&self, drug: &str, event: &str, lo_off: i32, hi_off: i32) -> (u64, u64, u64, u64) {
        let mut c = (0, 0, 0, 0);
        for (pid, d, index) in self.episodes() {
            let lo = index + lo_off;
            let hi = index + hi_off;
            let p = self.patient(&pid);
            let active = lo.0 >= p.registration_date.0 + 365 && hi <= self.last_active(&pid);
            if !active {
                continue;
            }
            let has = self.has_event(&pid, event, lo, hi);
            c.3 += 1;
            c.2 += u64::from(has);
            if d == drug {
                c.1 += 1;
                c.0 += u64::from(has);
            }
        }
        c
    }

    /// Supports as `(supp_x, seq_unexpected, seq, bg_unexpected, bg, population)`.
    pub fn support_counts(&self, drug: &str, event: &str, t: i32, pre: i32, seed: u64) -> [u64; 6] {
        let mut s = [0u64; 6];
        s[5] = self.patients.len() as u64;
        let flags = |pid: &str, index: Day| {
            let p = self.patient(pid);
            let post = self.has_event(pid, event, index + 1, index + t);
            let lo = (index - pre).max(p.registration_date + 365);
            let prior = self.has_event(pid, event, lo, index - 1);
            (post, post && !prior)
        };
        let episodes = self.episodes_of(drug);
        for p in &self.patients {
            let pid = p.patient_id.as_str();
            if let Some(index) = episodes.iter().filter(|(q, _)| q == pid).map(|(_, i)| *i).min() {
                let (post, unexpected) = flags(pid, index);
                s[0] += 1;
                s[2] += u64::from(post);
                s[1] += u64::from(unexpected);
            } else if !self.rx.iter().any(|r| r.patient_id == pid && r.drug_code == drug) {
                let lo = p.registration_date.0 + 365;
                let hi = self.last_active(pid).0 - t;
                if hi < lo {
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(patient_stream_seed(seed, drug, pid));
                let s_day = Day(rng.random_range(lo..=hi));
                let (post, unexpected) = flags(pid, s_day);
                s[4] += u64::from(post);
                s[3] += u64::from(unexpected);
            }
        }
        s[4] += s[2];
        s[3] += s[1];
        s
    }

    /// Codes inside `(index, index+T]` of any episode of `drug`.
    pub fn candidates(&self, drug: &str, t: i32) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (pid, index) in self.episodes_of(drug) {
            for e in self.ev.iter().filter(|e| e.patient_id == pid) {
                if e.date.0 > index.0 && e.date.0 <= index.0 + t {
                    out.insert(e.event_code.clone());
                }
            }
        }
        out
    }
}
