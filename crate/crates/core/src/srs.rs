//! Disproportionality over pseudo spontaneous reports.
//!
//! Every post-washout prescription is treated as a report listing the
//! distinct `(event_code, date)` occurrences inside its risk window.
//! Candidate events are ranked by the lower 90% bound of the reporting
//! odds ratio.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cohort::{candidate_event_ids, extract_exposures, risk_window, StudyConfig};
use crate::ranking::{rank_descending, AlgorithmId, RankedSignalList};
use crate::store::{CodeId, Database, PatientIdx};

/// z-quantile for a two-sided 90% interval.
pub const Z_90: f64 = 1.645;

/// Drug/event 2×2 table: `w00` drug & event, `w01` drug & other events,
/// `w10` other drugs & event, `w11` other drugs & other events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub w00: u64,
    pub w01: u64,
    pub w10: u64,
    pub w11: u64,
}

impl ContingencyTable {
    pub fn new(w00: u64, w01: u64, w10: u64, w11: u64) -> Self {
        ContingencyTable { w00, w01, w10, w11 }
    }

    pub fn total(&self) -> u64 {
        self.w00 + self.w01 + self.w10 + self.w11
    }

    pub fn has_zero_cell(&self) -> bool {
        self.w00 == 0 || self.w01 == 0 || self.w10 == 0 || self.w11 == 0
    }

    /// Cells as reals, Haldane-Anscombe shifted by ½ when any cell is zero
    /// and `correction` is on. `None` when a zero cell remains.
    fn cells(&self, correction: bool) -> Option<([f64; 4], bool)> {
        let raw = [self.w00, self.w01, self.w10, self.w11].map(|c| c as f64);
        if !self.has_zero_cell() {
            Some((raw, false))
        } else if correction {
            Some((raw.map(|c| c + 0.5), true))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RorScore {
    pub event_code: String,
    pub ror: Option<f64>,
    pub ror05: Option<f64>,
    pub corrected: bool,
}

pub fn ror(table: &ContingencyTable, correction: bool) -> Option<f64> {
    let ([a, b, c, d], _) = table.cells(correction)?;
    Some((a / c) / (b / d))
}

pub fn ror05(table: &ContingencyTable, correction: bool) -> Option<f64> {
    let ([a, b, c, d], _) = table.cells(correction)?;
    let ln_ror = ((a / c) / (b / d)).ln();
    let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
    Some((ln_ror - Z_90 * se).exp())
}

pub fn ror_score(event_code: &str, table: &ContingencyTable, correction: bool) -> RorScore {
    RorScore {
        event_code: event_code.to_owned(),
        ror: ror(table, correction),
        ror05: ror05(table, correction),
        corrected: correction && table.has_zero_cell(),
    }
}

/// Per-drug counts of distinct (prescription, event occurrence) pairs,
/// computed once per database and shared by every drug.
#[derive(Debug, Clone)]
pub struct SrsCounts {
    by_drug: Vec<HashMap<CodeId, u64>>,
    by_event: HashMap<CodeId, u64>,
    drug_totals: Vec<u64>,
    grand_total: u64,
}

impl SrsCounts {
    pub fn compute(db: &Database, t: i32, include_day0: bool) -> SrsCounts {
        let mut by_drug = vec![HashMap::new(); db.drugs().len()];
        for idx in 0..db.n_patients() as PatientIdx {
            let from = db.patient(idx).observable_from();
            for rx in db.prescriptions_of(idx).iter().filter(|r| r.day >= from) {
                let counts: &mut HashMap<CodeId, u64> = &mut by_drug[rx.code.0 as usize];
                for ev in db.events_in(idx, risk_window(rx.day, t, include_day0)) {
                    *counts.entry(ev.code).or_default() += 1;
                }
            }
        }
        let mut by_event: HashMap<CodeId, u64> = HashMap::new();
        let mut drug_totals = Vec::with_capacity(by_drug.len());
        for counts in &by_drug {
            let mut total = 0;
            for (&code, &n) in counts {
                *by_event.entry(code).or_default() += n;
                total += n;
            }
            drug_totals.push(total);
        }
        let grand_total = drug_totals.iter().sum();
        SrsCounts {
            by_drug,
            by_event,
            drug_totals,
            grand_total,
        }
    }

    pub fn table(&self, drug: CodeId, event: CodeId) -> ContingencyTable {
        let w00 = self.by_drug[drug.0 as usize].get(&event).copied().unwrap_or(0);
        let x_total = self.drug_totals[drug.0 as usize];
        let w10 = self.by_event.get(&event).copied().unwrap_or(0) - w00;
        let other_total = self.grand_total - x_total;
        ContingencyTable {
            w00,
            w01: x_total - w00,
            w10,
            w11: other_total - w10,
        }
    }

    /// Events with at least one occurrence after the drug.
    pub fn events_after(&self, drug: CodeId) -> impl Iterator<Item = CodeId> + '_ {
        self.by_drug[drug.0 as usize].keys().copied()
    }
}

/// Contingency tables for every event seen within `t` days after a
/// prescription of `drug_code`.
pub fn build_srs_counts(
    db: &Database,
    drug_code: &str,
    t: i32,
) -> BTreeMap<String, ContingencyTable> {
    let Some(drug) = db.drugs().get(drug_code) else {
        return BTreeMap::new();
    };
    let counts = SrsCounts::compute(db, t, false);
    counts
        .events_after(drug)
        .map(|e| (db.event_codes().name(e).to_owned(), counts.table(drug, e)))
        .collect()
}

pub fn rank_ror(db: &Database, config: &StudyConfig) -> RankedSignalList {
    let counts = SrsCounts::compute(db, config.risk_window_days, config.include_day0);
    let exposures = extract_exposures(db, config);
    let candidates = candidate_event_ids(db, &exposures, config);
    rank_ror_with(db, config, &counts, &candidates)
}

pub fn rank_ror_with(
    db: &Database,
    config: &StudyConfig,
    counts: &SrsCounts,
    candidates: &[CodeId],
) -> RankedSignalList {
    let scored = match db.drugs().get(&config.drug_code) {
        Some(drug) => candidates
            .iter()
            .map(|&e| {
                let code = db.event_codes().name(e);
                (code.to_owned(), ror05(&counts.table(drug, e), true))
            })
            .collect(),
        None => Vec::new(),
    };
    RankedSignalList {
        algorithm: AlgorithmId::Ror05.as_str().into(),
        drug_code: config.drug_code.clone(),
        seed: None,
        entries: rank_descending(scored),
        filtered: Vec::new(),
    }
}
