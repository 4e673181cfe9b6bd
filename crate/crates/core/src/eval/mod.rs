//! Scoring ranked lists against known adverse reactions.

mod dictionary;
pub mod report;
pub mod significance;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dictionary::{AdrDictionary, AdrEntry, FrequencyClass, DICTIONARY_COLUMNS};
pub use significance::{compare_algorithms, signed_rank_test, Metric, PairTest, SignedRankTest, SignificanceMatrix};

use crate::ranking::RankedSignalList;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{file}: line {line}: {message}")]
    Malformed { file: String, line: u64, message: String },
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: String, column: &'static str },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("significance testing needs at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
}

impl EvalError {
    pub(crate) fn csv(file: &str, source: csv::Error) -> Self {
        EvalError::Csv { file: file.into(), source }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io { file: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    /// Any dictionary entry counts.
    All,
    /// Only entries classed as rare.
    Rare,
    /// Only reaction-code entries.
    ReactionCodes,
}

impl TruthMode {
    pub const ALL: [TruthMode; 3] = [TruthMode::All, TruthMode::Rare, TruthMode::ReactionCodes];

    pub fn as_str(self) -> &'static str {
        match self {
            TruthMode::All => "all",
            TruthMode::Rare => "rare",
            TruthMode::ReactionCodes => "reaction_codes",
        }
    }

    fn accepts(self, e: &AdrEntry) -> bool {
        match self {
            TruthMode::All => true,
            TruthMode::Rare => e.frequency_class == FrequencyClass::Rare,
            TruthMode::ReactionCodes => e.is_reaction_code,
        }
    }
}

/// Binary relevance labels aligned with a ranked list.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TruthVector(pub Vec<bool>);

impl TruthVector {
    pub fn from_bits(bits: &[u8]) -> Self {
        TruthVector(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.0.iter().filter(|&&y| y).count()
    }
}

pub fn truth_vector(list: &RankedSignalList, dict: &AdrDictionary, mode: TruthMode) -> TruthVector {
    TruthVector(
        list.entries
            .iter()
            .map(|e| {
                dict.get(&list.drug_code, &e.event_code)
                    .is_some_and(|entry| mode.accepts(entry))
            })
            .collect(),
    )
}

/// Fraction of known reactions in the top `k`. `k` is clamped to
/// `[1, len]`; an empty vector scores 0.
pub fn precision_k(y: &TruthVector, k: usize) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let k = k.clamp(1, y.len());
    y.0[..k].iter().filter(|&&b| b).count() as f64 / k as f64
}

/// Mean of `precision_K` over the ranks `K` holding a known reaction,
/// normalised by the number of known reactions present in the list.
/// `None` when the list holds none.
///
/// Summed in exact rationals while they fit in `u128`, so the result is
/// the correctly rounded value; falls back to floating point beyond that.
pub fn map_score(y: &TruthVector) -> Option<f64> {
    let hit_ranks: Vec<u128> = y.0.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| i as u128 + 1).collect();
    if hit_ranks.is_empty() {
        return None;
    }
    let exact = hit_ranks
        .iter()
        .enumerate()
        .try_fold((0u128, 1u128), |acc, (j, &k)| ratio_add(acc, (j as u128 + 1, k)))
        .and_then(|(num, den)| Some((num, den.checked_mul(hit_ranks.len() as u128)?)));
    if let Some((num, den)) = exact {
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        if num < (1 << 53) && den < (1 << 53) {
            return Some(num as f64 / den as f64);
        }
    }
    let sum: f64 = hit_ranks.iter().enumerate().map(|(j, &k)| (j + 1) as f64 / k as f64).sum();
    Some(sum / hit_ranks.len() as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn ratio_add((an, ad): (u128, u128), (bn, bd): (u128, u128)) -> Option<(u128, u128)> {
    let g = gcd(ad, bd);
    let den = (ad / g).checked_mul(bd)?;
    let num = an.checked_mul(bd / g)?.checked_add(bn.checked_mul(ad / g)?)?;
    let r = gcd(num, den);
    Some((num / r, den / r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm_id: String,
    pub drug_code: String,
    pub precision_10: f64,
    pub precision_50: f64,
    pub map_all: Option<f64>,
    pub map_rare: Option<f64>,
    pub map_reaction_codes: Option<f64>,
    pub n_candidates: usize,
    pub n_known_adrs_in_list: usize,
    /// Dictionary entries for this drug, reported for context.
    pub dictionary_size: usize,
    /// The list was shorter than 50, so precision used the full length.
    pub precision_truncated: bool,
}

impl EvalReport {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Precision10 => Some(self.precision_10),
            Metric::Precision50 => Some(self.precision_50),
            Metric::MapAll => self.map_all,
            Metric::MapRare => self.map_rare,
            Metric::MapReactionCodes => self.map_reaction_codes,
        }
    }

    pub fn map(&self, mode: TruthMode) -> Option<f64> {
        match mode {
            TruthMode::All => self.map_all,
            TruthMode::Rare => self.map_rare,
            TruthMode::ReactionCodes => self.map_reaction_codes,
        }
    }
}

pub fn evaluate(list: &RankedSignalList, dict: &AdrDictionary) -> EvalReport {
    let all = truth_vector(list, dict, TruthMode::All);
    EvalReport {
        algorithm_id: list.algorithm.clone(),
        drug_code: list.drug_code.clone(),
        precision_10: precision_k(&all, 10),
        precision_50: precision_k(&all, 50),
        map_all: map_score(&all),
        map_rare: map_score(&truth_vector(list, dict, TruthMode::Rare)),
        map_reaction_codes: map_score(&truth_vector(list, dict, TruthMode::ReactionCodes)),
        n_candidates: list.len(),
        n_known_adrs_in_list: all.hits(),
        dictionary_size: dict.entries_for(&list.drug_code).count(),
        precision_truncated: list.len() < 50,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::rank_descending;

    fn table_list() -> RankedSignalList {
        RankedSignalList {
            algorithm: "demo".into(),
            drug_code: "X".into(),
            seed: None,
            entries: rank_descending(vec![
                ("Event 1".into(), Some(2.34)),
                ("Event 5".into(), Some(2.12)),
                ("Event 4".into(), Some(1.75)),
                ("Event 2".into(), Some(1.74)),
                ("Event 3".into(), Some(0.68)),
            ]),
            filtered: vec![],
        }
    }

    fn dict() -> AdrDictionary {
        let mut d = AdrDictionary::new();
        d.insert("X", "Event 5", AdrEntry { frequency_class: FrequencyClass::Frequent, is_reaction_code: false });
        d.insert("X", "Event 4", AdrEntry { frequency_class: FrequencyClass::Rare, is_reaction_code: true });
        d.insert("Y", "Event 1", AdrEntry { frequency_class: FrequencyClass::Rare, is_reaction_code: true });
        d
    }

    #[test]
    fn worked_example_truth_vector() {
        let y = truth_vector(&table_list(), &dict(), TruthMode::All);
        assert_eq!(y, TruthVector::from_bits(&[0, 1, 1, 0, 0]));
        let rare = truth_vector(&table_list(), &dict(), TruthMode::Rare);
        assert_eq!(rare, TruthVector::from_bits(&[0, 0, 1, 0, 0]));
        let none = truth_vector(&table_list(), &AdrDictionary::new(), TruthMode::All);
        assert_eq!(none.hits(), 0);
    }

    #[test]
    fn worked_example_metrics() {
        let y = TruthVector::from_bits(&[0, 1, 1, 0, 0]);
        assert_eq!(precision_k(&y, 2), 1.0 / 2.0);
        assert_eq!(precision_k(&y, 3), 2.0 / 3.0);
        assert_eq!(map_score(&y), Some(7.0 / 12.0));
        assert_eq!(map_score(&TruthVector::from_bits(&[1])), Some(1.0));
        assert_eq!(map_score(&TruthVector::from_bits(&[0, 0])), None);
        assert_eq!(precision_k(&TruthVector::from_bits(&[0, 0, 0]), 2), 0.0);
        assert_eq!(precision_k(&y, 50), 2.0 / 5.0);
    }

    #[test]
    fn report_fields() {
        let r = evaluate(&table_list(), &dict());
        assert_eq!(r.n_known_adrs_in_list, 2);
        assert_eq!(r.dictionary_size, 2);
        assert_eq!(r.map_all, Some(7.0 / 12.0));
        assert_eq!(r.map_rare, Some(1.0 / 3.0));
        assert!(r.precision_truncated);
        assert_eq!(r.precision_10, 2.0 / 5.0);
    }
}
