//! Ranked signal lists shared by every algorithm.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The seven algorithm configurations compared side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmId {
    Oe1,
    Oe2,
    Mutara60,
    Mutara180,
    Hunt60,
    Hunt180,
    Ror05,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 7] = [
        AlgorithmId::Oe1,
        AlgorithmId::Oe2,
        AlgorithmId::Mutara60,
        AlgorithmId::Mutara180,
        AlgorithmId::Hunt60,
        AlgorithmId::Hunt180,
        AlgorithmId::Ror05,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::Oe1 => "oe1",
            AlgorithmId::Oe2 => "oe2",
            AlgorithmId::Mutara60 => "mutara60",
            AlgorithmId::Mutara180 => "mutara180",
            AlgorithmId::Hunt60 => "hunt60",
            AlgorithmId::Hunt180 => "hunt180",
            AlgorithmId::Ror05 => "ror05",
        }
    }

    /// Predictable-event window for the MUTARA/HUNT configurations.
    pub fn pre_window_days(self) -> Option<i32> {
        match self {
            AlgorithmId::Mutara60 | AlgorithmId::Hunt60 => Some(60),
            AlgorithmId::Mutara180 | AlgorithmId::Hunt180 => Some(180),
            _ => None,
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownAlgorithm(pub String);

impl fmt::Display for UnknownAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown algorithm id {:?} (expected one of oe1, oe2, mutara60, mutara180, hunt60, hunt180, ror05)",
            self.0
        )
    }
}

impl std::error::Error for UnknownAlgorithm {}

impl FromStr for AlgorithmId {
    type Err = UnknownAlgorithm;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| UnknownAlgorithm(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    None,
    PriorMonth,
    DayOfPrescription,
}

impl FilterReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::None => "none",
            FilterReason::PriorMonth => "prior_month",
            FilterReason::DayOfPrescription => "day_of_prescription",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSignal {
    /// 1-based position in the list.
    pub rank: usize,
    pub event_code: String,
    /// `None` marks an undefined score; such entries sort last.
    pub score: Option<f64>,
    /// Shares its score with an adjacent entry.
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSignal {
    pub event_code: String,
    pub score: Option<f64>,
    pub reason: FilterReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSignalList {
    pub algorithm: String,
    pub drug_code: String,
    pub seed: Option<u64>,
    pub entries: Vec<RankedSignal>,
    pub filtered: Vec<FilteredSignal>,
}

impl RankedSignalList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based rank of `event_code`, if present.
    pub fn rank_of(&self, event_code: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.event_code == event_code)
            .map(|e| e.rank)
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.event_code.as_str())
    }
}

/// Descending by score, undefined last, ties by event code ascending.
pub fn score_order(a: (&str, Option<f64>), b: (&str, Option<f64>)) -> Ordering {
    let by_score = match (a.1, b.1) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_score.then_with(|| a.0.cmp(b.0))
}

pub fn rank_descending(mut scored: Vec<(String, Option<f64>)>) -> Vec<RankedSignal> {
    scored.sort_by(|a, b| score_order((&a.0, a.1), (&b.0, b.1)));
    let same = |i: usize, j: usize| scored[i].1 == scored[j].1;
    (0..scored.len())
        .map(|i| RankedSignal {
            rank: i + 1,
            event_code: scored[i].0.clone(),
            score: scored[i].1,
            tied: (i > 0 && same(i, i - 1)) || (i + 1 < scored.len() && same(i, i + 1)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_score_then_code() {
        let r = rank_descending(vec![
            ("B".into(), Some(0.5)),
            ("A".into(), Some(2.0)),
            ("D".into(), None),
            ("C".into(), Some(0.5)),
        ]);
        let codes: Vec<&str> = r.iter().map(|e| e.event_code.as_str()).collect();
        assert_eq!(codes, ["A", "B", "C", "D"]);
        assert_eq!(r.iter().map(|e| e.tied).collect::<Vec<_>>(), [false, true, true, false]);
        assert_eq!(r[3].rank, 4);
    }

    #[test]
    fn algorithm_ids_parse() {
        for a in AlgorithmId::ALL {
            assert_eq!(a.as_str().parse::<AlgorithmId>(), Ok(a));
        }
        assert!("mutara90".parse::<AlgorithmId>().is_err());
    }
}
