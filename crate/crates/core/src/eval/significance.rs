//! One-sided paired rank tests between algorithms, Bonferroni-corrected.
//!
//! The paired test is the Wilcoxon signed-rank test. Zero differences are
//! dropped and tied absolute differences share mid-ranks. For up to
//! [`EXACT_MAX_N`] pairs the null distribution of W+ is enumerated exactly
//! over the observed mid-ranks; above that a tie-corrected normal
//! approximation with continuity correction is used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport};
use crate::gamma::regularized_lower_gamma;

pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision10,
    Precision50,
    MapAll,
    MapRare,
    MapReactionCodes,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Precision10,
        Metric::Precision50,
        Metric::MapAll,
        Metric::MapRare,
        Metric::MapReactionCodes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Precision10 => "precision_10",
            Metric::Precision50 => "precision_50",
            Metric::MapAll => "map_all",
            Metric::MapRare => "map_rare",
            Metric::MapReactionCodes => "map_reaction_codes",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedRankTest {
    /// Non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    /// P(W+ ≥ observed) under the null.
    pub p_value: f64,
    pub exact: bool,
    /// Every difference was zero.
    pub degenerate: bool,
}

fn mid_ranks(abs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0.0; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn standard_normal_sf(z: f64) -> f64 {
    // erf(x) = P(1/2, x²)
    let x = z / std::f64::consts::SQRT_2;
    let erf = regularized_lower_gamma(0.5, x * x);
    if x >= 0.0 {
        0.5 * (1.0 - erf)
    } else {
        0.5 * (1.0 + erf)
    }
}

/// One-sided test of H1: the paired differences `a − b` tend to be positive.
pub fn signed_rank_test(a: &[f64], b: &[f64]) -> SignedRankTest {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return SignedRankTest {
            n,
            w_plus: 0.0,
            p_value: 1.0,
            exact: true,
            degenerate: true,
        };
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).fold(0.0, |acc, (_, r)| acc + r);

    if n <= EXACT_MAX_N {
        // Mid-ranks are multiples of ½, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut ways = vec![0u64; total + 1];
        ways[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                ways[s] += ways[s - r];
            }
        }
        let observed = (w_plus * 2.0).round() as usize;
        let tail: u64 = ways[observed..].iter().sum();
        return SignedRankTest {
            n,
            w_plus,
            p_value: tail as f64 / (1u64 << n) as f64,
            exact: true,
            degenerate: false,
        };
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean - 0.5) / var.sqrt();
    SignedRankTest {
        n,
        w_plus,
        p_value: standard_normal_sf(z).min(1.0),
        exact: false,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    /// Algorithm hypothesised to score higher.
    pub better: String,
    pub worse: String,
    pub n_drugs: usize,
    pub test: SignedRankTest,
    /// Bonferroni-adjusted p-value over every ordered pair.
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub metric: Metric,
    pub alpha: f64,
    pub correction: String,
    pub algorithms: Vec<String>,
    pub pairs: Vec<PairTest>,
}

impl SignificanceMatrix {
    pub fn pair(&self, better: &str, worse: &str) -> Option<&PairTest> {
        self.pairs.iter().find(|p| p.better == better && p.worse == worse)
    }

    pub fn any_significant(&self) -> bool {
        self.pairs.iter().any(|p| p.significant)
    }
}

/// Tests every ordered algorithm pair on `metric`, pairing by drug. Drugs
/// where either algorithm's metric is undefined are left out of that pair.
pub fn compare_algorithms(
    reports: &[EvalReport],
    metric: Metric,
    alpha: f64,
) -> Result<SignificanceMatrix, EvalError> {
    let mut table: BTreeMap<&str, BTreeMap<&str, Option<f64>>> = BTreeMap::new();
    let mut drugs = BTreeSet::new();
    for r in reports {
        table
            .entry(r.algorithm_id.as_str())
            .or_default()
            .insert(r.drug_code.as_str(), r.metric(metric));
        drugs.insert(r.drug_code.as_str());
    }
    if table.len() < 2 {
        return Err(EvalError::TooFew { what: "algorithms", needed: 2, got: table.len() });
    }
    if drugs.len() < 2 {
        return Err(EvalError::TooFew { what: "drugs", needed: 2, got: drugs.len() });
    }
    let algorithms: Vec<&str> = table.keys().copied().collect();
    let m = (algorithms.len() * (algorithms.len() - 1)) as f64;
    let mut pairs = Vec::new();
    for &a in &algorithms {
        for &b in &algorithms {
            if a == b {
                continue;
            }
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for d in &drugs {
                if let (Some(Some(x)), Some(Some(y))) = (table[a].get(d), table[b].get(d)) {
                    xs.push(*x);
                    ys.push(*y);
                }
            }
            let test = signed_rank_test(&xs, &ys);
            let p_adjusted = (test.p_value * m).min(1.0);
            pairs.push(PairTest {
                better: a.to_owned(),
                worse: b.to_owned(),
                n_drugs: xs.len(),
                significant: !test.degenerate && p_adjusted <= alpha,
                test,
                p_adjusted,
            });
        }
    }
    Ok(SignificanceMatrix {
        metric,
        alpha,
        correction: "bonferroni".into(),
        algorithms: algorithms.into_iter().map(str::to_owned).collect(),
        pairs,
    })
}
