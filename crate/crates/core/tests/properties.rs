mod oracle;

use std::collections::BTreeSet;

use lodsig_core::cohort::{candidate_events, extract_exposures, StudyConfig};
use lodsig_core::eval::{map_score, precision_k, TruthVector};
use lodsig_core::ic::{ic, rank_oe, OeVariant};
use lodsig_core::leverage::{rank_hunt, rank_mutara, support_counts};
use lodsig_core::srs::{ror, ror05, rank_ror, ContingencyTable};
use lodsig_core::store::Database;
use oracle::{random_raw, Raw, DRUGS, EVENTS};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn load(raw: &Raw) -> Database {
    Database::from_records(raw.patients.clone(), raw.rx.clone(), raw.ev.clone()).unwrap()
}

fn brute_map(y: &[bool]) -> Option<f64> {
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (i, &b) in y.iter().enumerate() {
        if b {
            hits += 1.0;
            sum += hits / (i + 1) as f64;
        }
    }
    (hits > 0.0).then(|| sum / hits)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ror_is_scale_invariant(a in 1u64..500, b in 1u64..500, c in 1u64..500, d in 1u64..500, k in 2u64..50) {
        let t = ContingencyTable::new(a, b, c, d);
        let s = ContingencyTable::new(k * a, k * b, k * c, k * d);
        let (r, rs) = (ror(&t, false).unwrap(), ror(&s, false).unwrap());
        prop_assert!((r - rs).abs() <= 1e-12 * r);
        // The lower bound tightens towards the point estimate with more data.
        prop_assert!(ror05(&t, false).unwrap() < r);
        prop_assert!(ror05(&t, false).unwrap() < ror05(&s, false).unwrap());
    }

    #[test]
    fn map_matches_straightforward_sum(bits in prop::collection::vec(any::<bool>(), 1..60)) {
        let y = TruthVector(bits.clone());
        match (map_score(&y), brute_map(&bits)) {
            (Some(m), Some(b)) => {
                prop_assert!((m - b).abs() < 1e-12);
                prop_assert!(m > 0.0 && m <= 1.0);
            }
            (m, b) => prop_assert_eq!(m, b),
        }
        let n = bits.len();
        let hits = bits.iter().filter(|&&b| b).count();
        prop_assert_eq!(precision_k(&y, n), hits as f64 / n as f64);
    }

    #[test]
    fn promoting_a_hit_never_lowers_map(bits in prop::collection::vec(any::<bool>(), 2..40), at in 1usize..40) {
        let at = at % (bits.len() - 1) + 1;
        prop_assume!(bits[at] && !bits[at - 1]);
        let mut moved = bits.clone();
        moved.swap(at, at - 1);
        prop_assert!(map_score(&TruthVector(moved)).unwrap() >= map_score(&TruthVector(bits)).unwrap());
    }

    #[test]
    fn precision_falls_after_last_hit(bits in prop::collection::vec(any::<bool>(), 1..40)) {
        let y = TruthVector(bits.clone());
        let last = bits.iter().rposition(|&b| b).map_or(1, |i| i + 1);
        for k in last..bits.len() {
            prop_assert!(precision_k(&y, k + 1) <= precision_k(&y, k));
        }
    }

    #[test]
    fn ic_monotone(n in 0u32..5000, e in 0.0f64..5000.0, dn in 1u32..100, de in 0.01f64..100.0) {
        let (n, dn) = (f64::from(n), f64::from(dn));
        prop_assert!(ic(n + dn, e) > ic(n, e));
        prop_assert!(ic(n, e + de) < ic(n, e));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rankings_ignore_row_order(seed in 0u64..10_000, shuffle in any::<u64>()) {
        let raw = random_raw(seed, 25);
        let mut shuffled = raw.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        shuffled.patients.shuffle(&mut rng);
        shuffled.rx.shuffle(&mut rng);
        shuffled.ev.shuffle(&mut rng);
        let (a, b) = (load(&raw), load(&shuffled));
        for drug in DRUGS {
            let config = StudyConfig { rng_seed: seed, ..StudyConfig::for_drug(drug) };
            prop_assert_eq!(extract_exposures(&a, &config).len(), extract_exposures(&b, &config).len());
            prop_assert_eq!(rank_ror(&a, &config), rank_ror(&b, &config));
            prop_assert_eq!(rank_oe(&a, &config, OeVariant::Two).unwrap(), rank_oe(&b, &config, OeVariant::Two).unwrap());
            prop_assert_eq!(rank_mutara(&a, &config), rank_mutara(&b, &config));
            prop_assert_eq!(rank_hunt(&a, &config), rank_hunt(&b, &config));
        }
    }

    #[test]
    fn candidates_grow_with_risk_window(seed in 0u64..10_000, t in 1i32..60, extra in 1i32..60) {
        let raw = random_raw(seed, 15);
        let db = load(&raw);
        for drug in DRUGS {
            let short = StudyConfig { risk_window_days: t, ..StudyConfig::for_drug(drug) };
            let long = StudyConfig { risk_window_days: t + extra, ..short.clone() };
            let a = candidate_events(&db, &extract_exposures(&db, &short), &short);
            let b = candidate_events(&db, &extract_exposures(&db, &long), &long);
            prop_assert!(a.is_subset(&b), "{drug}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn empty_pre_window_disables_the_filter(seed in 0u64..10_000) {
        let raw = random_raw(seed, 15);
        let db = load(&raw);
        for drug in DRUGS {
            let config = StudyConfig { pre_window_days: 0, rng_seed: seed, ..StudyConfig::for_drug(drug) };
            let exposures = extract_exposures(&db, &config);
            for event in EVENTS {
                let s = support_counts(&db, &exposures, event, &config);
                prop_assert_eq!(s.supp_seq_unexpected, s.supp_seq);
                prop_assert_eq!(s.supp_bg_unexpected, s.supp_bg);
            }
        }
    }

    #[test]
    fn reseeding_moves_background_within_bound(seed in 0u64..10_000, s1 in any::<u64>(), s2 in any::<u64>()) {
        let raw = random_raw(seed, 25);
        let db = load(&raw);
        let events = raw.events();
        for drug in DRUGS {
            let exposed: BTreeSet<&str> = raw.rx.iter().filter(|r| r.drug_code == drug).map(|r| r.patient_id.as_str()).collect();
            let a = StudyConfig { rng_seed: s1, ..StudyConfig::for_drug(drug) };
            let b = StudyConfig { rng_seed: s2, ..a.clone() };
            let exposures = extract_exposures(&db, &a);
            for event in EVENTS {
                let bound = raw
                    .patients
                    .iter()
                    .filter(|p| !exposed.contains(p.patient_id.as_str()))
                    .filter(|p| events.iter().any(|(q, c, _)| *q == p.patient_id && c == event))
                    .count() as u64;
                let (x, y) = (support_counts(&db, &exposures, event, &a), support_counts(&db, &exposures, event, &b));
                prop_assert_eq!(x.supp_seq, y.supp_seq);
                prop_assert!(x.supp_bg.abs_diff(y.supp_bg) <= bound);
                prop_assert!(x.supp_bg_unexpected.abs_diff(y.supp_bg_unexpected) <= bound);
            }
        }
    }

    #[test]
    fn hunt_ranks_are_permutations(seed in 0u64..10_000) {
        let raw = random_raw(seed, 25);
        let db = load(&raw);
        for drug in DRUGS {
            let config = StudyConfig { rng_seed: seed, ..StudyConfig::for_drug(drug) };
            let list = rank_hunt(&db, &config);
            prop_assert!(list.entries.iter().all(|e| e.score.unwrap() > 0.0));
            let ranks: Vec<usize> = list.entries.iter().map(|e| e.rank).collect();
            prop_assert_eq!(ranks, (1..=list.len()).collect::<Vec<_>>());
        }
    }
}
