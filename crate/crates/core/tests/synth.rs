use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use lodsig_core::date::Day;
use lodsig_core::eval::FrequencyClass;
use lodsig_core::store::{read_events, read_patients, read_prescriptions, Database, EventRecord, PrescriptionRecord};
use lodsig_core::synth::{generate, DrugModel, Injection, InjectionKind, SynthConfig};

fn one_drug(n_patients: usize, rate: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        n_patients,
        background_event_rates: [("A".to_owned(), rate), ("B".to_owned(), 2.0 * rate)].into_iter().collect(),
        drugs: vec![DrugModel {
            drug_code: "X".into(),
            prescription_rate: 0.4,
            indication_event: None,
            repeat_rate: 1.0,
        }],
        rng_seed: seed,
        transfer_out_rate: 0.0,
        mortality_rate: 0.0,
        ..SynthConfig::default()
    }
}

fn by_patient(rx: &[PrescriptionRecord]) -> HashMap<&str, Vec<&PrescriptionRecord>> {
    let mut out: HashMap<&str, Vec<&PrescriptionRecord>> = HashMap::new();
    for r in rx {
        out.entry(&r.patient_id).or_default().push(r);
    }
    out
}

fn read_dir(dir: &Path) -> (Vec<lodsig_core::store::PatientRecord>, Vec<PrescriptionRecord>, Vec<EventRecord>) {
    let open = |name: &str| File::open(dir.join(name)).unwrap();
    (
        read_patients(open("patients.csv"), "patients.csv").unwrap(),
        read_prescriptions(open("prescriptions.csv"), "prescriptions.csv").unwrap(),
        read_events(open("events.csv"), "events.csv").unwrap(),
    )
}

/// Course starts: prescriptions with no same-drug prescription in the
/// previous 395 days.
fn brute_initiations(rx: &HashMap<&str, Vec<&PrescriptionRecord>>, pid: &str, drug: &str) -> Vec<Day> {
    let Some(rows) = rx.get(pid) else { return Vec::new() };
    let days: Vec<Day> = rows.iter().filter(|r| r.drug_code == drug).map(|r| r.date).collect();
    days.iter()
        .copied()
        .filter(|d| !days.iter().any(|e| e < d && d.0 - e.0 <= 395))
        .collect()
}

#[test]
fn same_seed_gives_identical_files() {
    let config = SynthConfig { n_patients: 800, ..SynthConfig::demo() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&config).unwrap().write(a.path()).unwrap();
    generate(&config).unwrap().write(b.path()).unwrap();
    for name in ["patients.csv", "prescriptions.csv", "events.csv", "ground_truth.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let other = generate(&SynthConfig { rng_seed: 2, ..config }).unwrap();
    let c = tempfile::tempdir().unwrap();
    other.write(c.path()).unwrap();
    assert_ne!(std::fs::read(a.path().join("events.csv")).unwrap(), std::fs::read(c.path().join("events.csv")).unwrap());
}

#[test]
fn generated_files_load_and_respect_spans() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig { n_patients: 1500, ..SynthConfig::demo() };
    generate(&config).unwrap().write(dir.path()).unwrap();
    let p = dir.path();
    let db = Database::load(p.join("prescriptions.csv"), p.join("events.csv"), p.join("patients.csv")).unwrap();
    assert_eq!(db.n_patients(), 1500);
    assert_eq!(db.duplicates_collapsed(), 0);

    let (patients, rx, ev) = read_dir(p);
    let end = Day::from_ymd(config.start_year + config.years_span as i32, 1, 1).unwrap();
    let by_id: HashMap<&str, _> = patients.iter().map(|q| (q.patient_id.as_str(), q)).collect();
    let dates = rx.iter().map(|r| (&r.patient_id, r.date)).chain(ev.iter().map(|e| (&e.patient_id, e.date)));
    for (pid, date) in dates {
        let q = by_id[pid.as_str()];
        assert!(date >= q.registration_date, "{pid} {date}");
        assert!(date < end);
        if let Some(death) = q.death_date {
            assert!(date <= death, "{pid} record {date} after death {death}");
        }
    }
    assert!(patients.iter().any(|q| q.death_date.is_some()));
}

#[test]
fn event_counts_scale_with_rate_and_person_time() {
    let config = one_drug(10_000, 0.5, 11);
    let dir = tempfile::tempdir().unwrap();
    generate(&config).unwrap().write(dir.path()).unwrap();
    let (patients, _, ev) = read_dir(dir.path());
    let end = Day::from_ymd(config.start_year + config.years_span as i32, 1, 1).unwrap();
    let years: f64 = patients.iter().map(|q| f64::from(end.0 - q.registration_date.0) / 365.0).sum();
    for (code, rate) in [("A", 0.5), ("B", 1.0)] {
        let n = ev.iter().filter(|e| e.event_code == code).count() as f64;
        let want = rate * years;
        assert!((n / want - 1.0).abs() < 0.05, "{code}: {n} vs {want}");
    }
}

#[test]
fn unit_relative_risk_stays_at_background() {
    for seed in [1, 2, 3] {
        let mut config = one_drug(10_000, 1.0, seed);
        config.injections = vec![Injection::adr("X", "A", 1.0)];
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&config).unwrap();
        assert_eq!(out.tallies[0].injected, 0);
        out.write(dir.path()).unwrap();
        let (patients, rx, ev) = read_dir(dir.path());
        let rx_of = by_patient(&rx);
        let end = Day::from_ymd(config.start_year + config.years_span as i32, 1, 1).unwrap();
        let mut observed = 0u64;
        let mut window_days = 0i64;
        let mut by_patient: HashMap<&str, Vec<Day>> = HashMap::new();
        for e in ev.iter().filter(|e| e.event_code == "A") {
            by_patient.entry(&e.patient_id).or_default().push(e.date);
        }
        for q in &patients {
            for s in brute_initiations(&rx_of, &q.patient_id, "X") {
                let hi = (s.0 + 30).min(end.0 - 1);
                window_days += i64::from(hi - s.0);
                observed += by_patient
                    .get(q.patient_id.as_str())
                    .map_or(0, |v| v.iter().filter(|d| d.0 > s.0 && d.0 <= hi).count() as u64);
            }
        }
        let p = 1.0 / 365.0;
        let expected = window_days as f64 * p;
        let sd = (window_days as f64 * p * (1.0 - p)).sqrt();
        assert!(expected > 500.0);
        assert!((observed as f64 - expected).abs() < 3.0 * sd, "seed {seed}: {observed} vs {expected:.1} ± {sd:.1}");
    }
}

#[test]
fn empty_injection_list_is_a_pure_noise_database() {
    let out = generate(&one_drug(200, 0.5, 4)).unwrap();
    assert!(out.truth.is_empty());
    assert!(out.tallies.is_empty());
    assert!(out.db.n_events() > 0);
}

#[test]
fn unmanifested_injection_is_dropped() {
    let mut config = one_drug(100, 0.5, 5);
    config.drugs[0].prescription_rate = 0.0;
    config.injections = vec![Injection::adr("X", "A", 10.0)];
    let out = generate(&config).unwrap();
    assert_eq!(out.tallies[0].initiations, 0);
    assert!(out.truth.is_empty());
}

#[test]
fn frequency_classes_match_a_recount() {
    let config = SynthConfig::demo();
    let out = generate(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    let (patients, rx, ev) = read_dir(dir.path());
    let rx_of = by_patient(&rx);
    let mut by_key: HashMap<(&str, &str), Vec<Day>> = HashMap::new();
    for e in &ev {
        by_key.entry((&e.patient_id, &e.event_code)).or_default().push(e.date);
    }
    let mut incidence: Vec<(f64, &str, &str)> = Vec::new();
    for inj in &config.injections {
        let daily = config.background_event_rates[&inj.event_code] / 365.0;
        let (lo, hi) = if inj.kind == InjectionKind::Day0Artifact { (0, 30) } else { (1, 30) };
        let (mut starts, mut observed) = (0u64, 0u64);
        for q in &patients {
            for s in brute_initiations(&rx_of, &q.patient_id, &inj.drug_code) {
                starts += 1;
                observed += by_key
                    .get(&(q.patient_id.as_str(), inj.event_code.as_str()))
                    .map_or(0, |v| v.iter().filter(|d| d.0 >= s.0 + lo && d.0 <= s.0 + hi).count() as u64);
            }
        }
        let excess = observed as f64 - daily * f64::from(hi - lo + 1) * starts as f64;
        assert!(excess > 0.0, "{}/{} did not manifest", inj.drug_code, inj.event_code);
        if inj.kind != InjectionKind::TherapeuticFailure {
            incidence.push((excess / starts as f64, &inj.drug_code, &inj.event_code));
        }
    }
    incidence.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = incidence.len();
    let mut want = BTreeMap::new();
    for (i, (_, drug, event)) in incidence.iter().enumerate() {
        let class = match i * 3 / n {
            0 => FrequencyClass::Rare,
            1 => FrequencyClass::LessFrequent,
            _ => FrequencyClass::Frequent,
        };
        want.insert((drug.to_string(), event.to_string()), class);
    }
    let got: BTreeMap<_, _> = out.truth.iter().map(|(d, e, entry)| ((d.to_owned(), e.to_owned()), entry.frequency_class)).collect();
    assert_eq!(got, want);
    assert!(out.truth.get("DRUG_A", "RASH_D0").unwrap().is_reaction_code);
    assert!(out.truth.get("DRUG_A", "FAIL_A").is_none());
}
