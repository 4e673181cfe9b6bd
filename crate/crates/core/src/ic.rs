//! Observed-to-expected ratio with shrinkage (the information component),
//! its credibility interval, the follow-up vs. control contrast IC_Δ and
//! the two filtered ranking variants.
//!
//! Counting units are exposure episodes: an episode contributes once to a
//! period's counts, however many times the event recurs inside it. An
//! episode enters a period only if the whole period window lies inside the
//! patient's observable span.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{all_exposures, candidate_event_ids, extract_exposures, ExposureEpisode, StudyConfig};
use crate::date::{Day, Window, MONTH_DAYS};
use crate::gamma::{gamma_quantile, GammaError};
use crate::ranking::{rank_descending, AlgorithmId, FilterReason, FilteredSignal, RankedSignalList};
use crate::store::{CodeId, Database};

#[derive(Debug, Error, PartialEq)]
pub enum IcError {
    #[error("empty study population for period {0}")]
    EmptyPopulation(Period),
    #[error(transparent)]
    Gamma(#[from] GammaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    /// `(index, index+T]`
    FollowupU,
    /// `[index − 27 months, index − 21 months)` by default.
    ControlV,
    /// `[index − 30 days, index)`
    MonthPrior,
    /// `[index, index]`
    DayOfPrescription,
}

impl Period {
    pub const ALL: [Period; 4] = [
        Period::FollowupU,
        Period::ControlV,
        Period::MonthPrior,
        Period::DayOfPrescription,
    ];

    pub fn window(self, index: Day, config: &StudyConfig) -> Window {
        match self {
            Period::FollowupU => config.risk_window(index),
            Period::ControlV => config.control_window(index),
            Period::MonthPrior => Window::new(index - MONTH_DAYS, index - 1),
            Period::DayOfPrescription => Window::new(index, index),
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Period::FollowupU => "followup_u",
            Period::ControlV => "control_v",
            Period::MonthPrior => "month_prior",
            Period::DayOfPrescription => "day_of_prescription",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodCounts {
    /// Drug episodes with the event in the period.
    pub n_xy: u64,
    /// Drug episodes actively followed through the period.
    pub n_x_dot: u64,
    /// Any-drug episodes with the event in the period.
    pub n_dot_y: u64,
    /// Any-drug episodes actively followed through the period.
    pub n_dot_dot: u64,
    pub period: Period,
}

/// `E = n_x· · n_·y / n_··`.
pub fn expected_count(counts: &PeriodCounts) -> Result<f64, IcError> {
    if counts.n_dot_dot == 0 {
        return Err(IcError::EmptyPopulation(counts.period));
    }
    Ok(counts.n_x_dot as f64 * counts.n_dot_y as f64 / counts.n_dot_dot as f64)
}

/// Shrunk information component `log2((n + ½) / (E + ½))`.
pub fn ic(n_xy: f64, expected: f64) -> f64 {
    ((n_xy + 0.5) / (expected + 0.5)).log2()
}

/// log2 of the `q_low` and `q_high` quantiles of the Gamma(n + ½, E + ½)
/// posterior of the observed-to-expected ratio.
pub fn ic_credibility_bounds(
    n_xy: f64,
    expected: f64,
    q_low: f64,
    q_high: f64,
) -> Result<(f64, f64), GammaError> {
    let shape = n_xy + 0.5;
    let rate = expected + 0.5;
    let lo = gamma_quantile(shape, rate, q_low)?;
    let hi = gamma_quantile(shape, rate, q_high)?;
    Ok((lo.log2(), hi.log2()))
}

/// Expected follow-up count rescaled by the control period's
/// observed/expected ratio. Falls back to the shrunk control ratio when the
/// control period has no observations or no expectation.
pub fn adjusted_expected(u: &PeriodCounts, v: &PeriodCounts) -> Result<f64, IcError> {
    let e_u = expected_count(u)?;
    let e_v = if v.n_dot_dot == 0 { 0.0 } else { expected_count(v)? };
    let n_v = v.n_xy as f64;
    let ratio = if v.n_xy == 0 || e_v == 0.0 {
        (n_v + 0.5) / (e_v + 0.5)
    } else {
        n_v / e_v
    };
    Ok(ratio * e_u)
}

pub fn ic_delta(u: &PeriodCounts, v: &PeriodCounts) -> Result<f64, IcError> {
    Ok(ic(u.n_xy as f64, adjusted_expected(u, v)?))
}

/// Per-period episode tallies over every event code.
#[derive(Debug, Clone)]
pub struct PeriodTally {
    pub active: u64,
    pub with_event: Vec<u64>,
}

impl PeriodTally {
    fn compute(
        db: &Database,
        episodes: &[ExposureEpisode],
        period: Period,
        config: &StudyConfig,
    ) -> PeriodTally {
        let n_codes = db.event_codes().len();
        let mut with_event = vec![0u64; n_codes];
        let mut stamp = vec![usize::MAX; n_codes];
        let mut active = 0;
        for (i, e) in episodes.iter().enumerate() {
            let w = period.window(e.index_date, config);
            if !w.within(&db.patient(e.patient).observable()) {
                continue;
            }
            active += 1;
            for ev in db.events_in(e.patient, w) {
                let c = ev.code.0 as usize;
                if stamp[c] != i {
                    stamp[c] = i;
                    with_event[c] += 1;
                }
            }
        }
        PeriodTally { active, with_event }
    }

    fn get(&self, code: CodeId) -> u64 {
        self.with_event.get(code.0 as usize).copied().unwrap_or(0)
    }
}

/// Four period tallies over one set of episodes.
#[derive(Debug, Clone)]
pub struct PeriodTallies([PeriodTally; 4]);

impl PeriodTallies {
    pub fn compute(db: &Database, episodes: &[ExposureEpisode], config: &StudyConfig) -> Self {
        PeriodTallies(Period::ALL.map(|p| PeriodTally::compute(db, episodes, p, config)))
    }

    pub fn period(&self, p: Period) -> &PeriodTally {
        &self.0[p.slot()]
    }
}

/// Any-drug background tallies; independent of the drug under study.
pub type OeBackground = PeriodTallies;

pub fn oe_background(db: &Database, config: &StudyConfig) -> OeBackground {
    PeriodTallies::compute(db, &all_exposures(db, config.risk_window_days), config)
}

fn counts_from(drug: &PeriodTallies, bg: &PeriodTallies, code: CodeId, period: Period) -> PeriodCounts {
    let x = drug.period(period);
    let all = bg.period(period);
    PeriodCounts {
        n_xy: x.get(code),
        n_x_dot: x.active,
        n_dot_y: all.get(code),
        n_dot_dot: all.active,
        period,
    }
}

/// Counts for one event and period. `exposures` are the drug's episodes.
pub fn period_counts(
    db: &Database,
    exposures: &[ExposureEpisode],
    event_code: &str,
    period: Period,
    config: &StudyConfig,
) -> PeriodCounts {
    let x = PeriodTally::compute(db, exposures, period, config);
    let all = PeriodTally::compute(db, &all_exposures(db, config.risk_window_days), period, config);
    let code = db.event_codes().get(event_code);
    PeriodCounts {
        n_xy: code.map_or(0, |c| x.get(c)),
        n_x_dot: x.active,
        n_dot_y: code.map_or(0, |c| all.get(c)),
        n_dot_dot: all.active,
        period,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OeVariant {
    /// Filters on the prior month only.
    One,
    /// Filters on the prior month and on the day of prescription.
    Two,
}

impl OeVariant {
    pub fn algorithm(self) -> AlgorithmId {
        match self {
            OeVariant::One => AlgorithmId::Oe1,
            OeVariant::Two => AlgorithmId::Oe2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcResult {
    pub event_code: String,
    pub ic_u: f64,
    pub ic_v: f64,
    pub ic_delta: f64,
    /// Credibility interval of `ic_delta` (q = 0.025 / 0.975).
    pub ci_low: f64,
    pub ci_high: f64,
    pub ic_month_prior: f64,
    pub ic_day0: f64,
    pub filtered: bool,
    pub filter_reason: FilterReason,
}

fn ic_of(c: &PeriodCounts) -> Result<f64, IcError> {
    if c.n_dot_dot == 0 {
        return Ok(ic(c.n_xy as f64, 0.0));
    }
    Ok(ic(c.n_xy as f64, expected_count(c)?))
}

pub fn score_event(
    db: &Database,
    code: CodeId,
    drug: &PeriodTallies,
    bg: &PeriodTallies,
    variant: OeVariant,
) -> Result<IcResult, IcError> {
    let u = counts_from(drug, bg, code, Period::FollowupU);
    let v = counts_from(drug, bg, code, Period::ControlV);
    let prior = counts_from(drug, bg, code, Period::MonthPrior);
    let day0 = counts_from(drug, bg, code, Period::DayOfPrescription);
    let e_star = adjusted_expected(&u, &v)?;
    let ic_delta = ic(u.n_xy as f64, e_star);
    let (ci_low, ci_high) = ic_credibility_bounds(u.n_xy as f64, e_star, 0.025, 0.975)?;
    let ic_u = ic_of(&u)?;
    let ic_month_prior = ic_of(&prior)?;
    let ic_day0 = ic_of(&day0)?;
    let filter_reason = if ic_month_prior > ic_u {
        FilterReason::PriorMonth
    } else if variant == OeVariant::Two && ic_day0 > ic_u {
        FilterReason::DayOfPrescription
    } else {
        FilterReason::None
    };
    Ok(IcResult {
        event_code: db.event_codes().name(code).to_owned(),
        ic_u,
        ic_v: ic_of(&v)?,
        ic_delta,
        ci_low,
        ci_high,
        ic_month_prior,
        ic_day0,
        filtered: filter_reason != FilterReason::None,
        filter_reason,
    })
}

/// Scores every candidate; the drug's period tallies are computed here,
/// the any-drug background is supplied by the caller.
pub fn score_oe_with(
    db: &Database,
    config: &StudyConfig,
    exposures: &[ExposureEpisode],
    candidates: &[CodeId],
    background: &OeBackground,
    variant: OeVariant,
) -> Result<Vec<IcResult>, IcError> {
    let drug = PeriodTallies::compute(db, exposures, config);
    candidates
        .iter()
        .map(|&c| score_event(db, c, &drug, background, variant))
        .collect()
}

pub fn ranked_from_scores(
    config: &StudyConfig,
    variant: OeVariant,
    scores: &[IcResult],
) -> RankedSignalList {
    let kept = scores
        .iter()
        .filter(|s| !s.filtered)
        .map(|s| (s.event_code.clone(), Some(s.ic_delta)))
        .collect();
    let mut filtered: Vec<FilteredSignal> = scores
        .iter()
        .filter(|s| s.filtered)
        .map(|s| FilteredSignal {
            event_code: s.event_code.clone(),
            score: Some(s.ic_delta),
            reason: s.filter_reason,
        })
        .collect();
    filtered.sort_by(|a, b| a.event_code.cmp(&b.event_code));
    RankedSignalList {
        algorithm: variant.algorithm().as_str().into(),
        drug_code: config.drug_code.clone(),
        seed: None,
        entries: rank_descending(kept),
        filtered,
    }
}

pub fn rank_oe(
    db: &Database,
    config: &StudyConfig,
    variant: OeVariant,
) -> Result<RankedSignalList, IcError> {
    let exposures = extract_exposures(db, config);
    let candidates = candidate_event_ids(db, &exposures, config);
    let background = oe_background(db, config);
    let scores = score_oe_with(db, config, &exposures, &candidates, &background, variant)?;
    Ok(ranked_from_scores(config, variant, &scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn counts(n_xy: u64, n_x_dot: u64, n_dot_y: u64, n_dot_dot: u64) -> PeriodCounts {
        PeriodCounts {
            n_xy,
            n_x_dot,
            n_dot_y,
            n_dot_dot,
            period: Period::FollowupU,
        }
    }

    #[test]
    fn expected_count_examples() {
        assert_relative_eq!(expected_count(&counts(0, 100, 50, 1000)).unwrap(), 5.0);
        assert_eq!(expected_count(&counts(0, 100, 0, 1000)).unwrap(), 0.0);
        assert_eq!(expected_count(&counts(0, 1000, 37, 1000)).unwrap(), 37.0);
        assert_eq!(
            expected_count(&counts(0, 0, 0, 0)),
            Err(IcError::EmptyPopulation(Period::FollowupU))
        );
    }

    #[test]
    fn ic_examples() {
        assert_eq!(ic(0.0, 0.0), 0.0);
        assert_relative_eq!(ic(7.0, 3.0), (7.5f64 / 3.5).log2(), epsilon = 1e-15);
        assert!((ic(7.0, 3.0) - 1.0995).abs() < 1e-4);
        for n in [0.0, 1.0, 17.0, 1e6] {
            assert_eq!(ic(n, n), 0.0);
        }
        assert_relative_eq!(ic(10.0, 0.0), 21f64.log2(), epsilon = 1e-15);
    }

    #[test]
    fn ic_delta_hand_example() {
        // E^u = 5 requires n_x·=5, n_·y=n_··; E^v = 4 likewise.
        let u = counts(20, 5, 10, 10);
        let mut v = counts(4, 4, 10, 10);
        v.period = Period::ControlV;
        assert_relative_eq!(adjusted_expected(&u, &v).unwrap(), 5.0, epsilon = 1e-12);
        let d = ic_delta(&u, &v).unwrap();
        assert_relative_eq!(d, (20.5f64 / 5.5).log2(), epsilon = 1e-12);
        assert!((d - 1.898).abs() < 1e-3);
    }

    #[test]
    fn ic_delta_cancels_equal_ratios() {
        let u = counts(12, 30, 20, 100); // E = 6, ratio 2
        let v = counts(8, 20, 20, 100); // E = 4, ratio 2
        assert!(ic_delta(&u, &v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ic_delta_shrinks_control_without_observations() {
        let u = counts(10, 10, 10, 100); // E = 1
        let v = counts(0, 10, 20, 100); // E = 2
        // ratio (0 + ½)/(2 + ½) = 0.2 → E* = 0.2
        assert_relative_eq!(adjusted_expected(&u, &v).unwrap(), 0.2, epsilon = 1e-12);
        let v0 = counts(0, 0, 0, 0);
        assert_relative_eq!(adjusted_expected(&u, &v0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn doubling_followup_shifts_less_than_a_bit() {
        let v = counts(4, 4, 10, 10);
        let base = ic_delta(&counts(20, 5, 10, 10), &v).unwrap();
        let doubled = ic_delta(&counts(40, 10, 10, 10), &v).unwrap();
        assert!((doubled - base).abs() < 1.0);
        assert!(doubled > base);
    }

    #[test]
    fn credibility_bounds_bracket_ic() {
        let (lo, hi) = ic_credibility_bounds(3.0, 1.0, 0.025, 0.975).unwrap();
        let point = ic(3.0, 1.0);
        assert!(lo < point && point < hi);
        let (mid, _) = ic_credibility_bounds(3.0, 1.0, 0.5, 0.975).unwrap();
        assert!(lo < mid && mid < hi);
        let (lo, hi) = ic_credibility_bounds(10000.0, 10000.0, 0.025, 0.975).unwrap();
        assert!(lo.abs() < 0.05 && hi.abs() < 0.05);
        assert!(ic_credibility_bounds(1.0, 1.0, 0.0, 0.975).is_err());
    }
}
