//! Indexed, immutable store of patient histories.
//!
//! Codes are interned to dense ids. Each patient's prescriptions and
//! medical events are kept sorted by `(day, code)` with exact duplicates
//! collapsed, so every windowed query is a binary search followed by a
//! short scan.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::{Day, Window, YEAR_DAYS};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{file}: line {line}: {message}")]
    Malformed {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{file}: line {line}: unknown patient_id {patient_id:?}")]
    UnknownPatient {
        file: String,
        line: u64,
        patient_id: String,
    },
    #[error("{file}: line {line}: record dated {date} precedes registration {registration} of patient {patient_id:?}")]
    BeforeRegistration {
        file: String,
        line: u64,
        patient_id: String,
        date: Day,
        registration: Day,
    },
    #[error("{file}: line {line}: duplicate patient_id {patient_id:?}")]
    DuplicatePatient {
        file: String,
        line: u64,
        patient_id: String,
    },
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: String, column: &'static str },
    #[error("no patient with id {0:?}")]
    NoSuchPatient(String),
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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeId(pub u32);

/// Bidirectional string ↔ dense id table.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, CodeId>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> CodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = CodeId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<CodeId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: CodeId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = CodeId> {
        (0..self.names.len() as u32).map(CodeId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl Gender {
    pub fn parse(s: &str) -> Option<Gender> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Some(Gender::Female),
            "m" | "male" => Some(Gender::Male),
            "" | "u" | "unknown" => Some(Gender::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A patient row as it appears in `patients.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub year_of_birth: i32,
    pub gender: Gender,
    pub registration_date: Day,
    pub death_date: Option<Day>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PrescriptionRecord {
    pub patient_id: String,
    pub drug_code: String,
    pub date: Day,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventRecord {
    pub patient_id: String,
    pub event_code: String,
    pub date: Day,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patient {
    pub id: String,
    pub year_of_birth: i32,
    pub gender: Gender,
    pub registration: Day,
    pub death: Option<Day>,
    /// Latest record date or the date of death, whichever is later.
    pub last_active: Day,
}

impl Patient {
    /// First day whose records are trusted (registration washout elapsed).
    pub fn observable_from(&self) -> Day {
        self.registration + YEAR_DAYS
    }

    /// The span over which the patient's records are both trusted and complete.
    pub fn observable(&self) -> Window {
        Window::new(self.observable_from(), self.last_active)
    }
}

/// One dated, coded atom of a patient history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    pub day: Day,
    pub code: CodeId,
}

/// Dense patient index; order matches ascending `patient_id`.
pub type PatientIdx = u32;

#[derive(Debug, Clone)]
pub struct Database {
    patients: Vec<Patient>,
    patient_index: HashMap<String, PatientIdx>,
    prescriptions: Vec<Vec<Entry>>,
    events: Vec<Vec<Entry>>,
    drugs: Interner,
    event_codes: Interner,
    duplicates_collapsed: usize,
}

fn entries_in(entries: &[Entry], window: Window) -> &[Entry] {
    if window.is_empty() {
        return &[];
    }
    let lo = entries.partition_point(|e| e.day < window.start);
    let hi = entries.partition_point(|e| e.day <= window.end);
    &entries[lo..hi.max(lo)]
}

impl Database {
    /// Builds an indexed store from in-memory rows. Row positions are
    /// reported as CSV line numbers (header on line 1).
    pub fn from_records(
        patients: Vec<PatientRecord>,
        prescriptions: Vec<PrescriptionRecord>,
        events: Vec<EventRecord>,
    ) -> Result<Database, StoreError> {
        let mut order: Vec<usize> = (0..patients.len()).collect();
        order.sort_by(|&a, &b| patients[a].patient_id.cmp(&patients[b].patient_id));
        let mut patient_index = HashMap::with_capacity(patients.len());
        let mut sorted = Vec::with_capacity(patients.len());
        for (pos, &i) in order.iter().enumerate() {
            let p = &patients[i];
            if patient_index
                .insert(p.patient_id.clone(), pos as PatientIdx)
                .is_some()
            {
                return Err(StoreError::DuplicatePatient {
                    file: "patients".into(),
                    line: i as u64 + 2,
                    patient_id: p.patient_id.clone(),
                });
            }
            sorted.push(Patient {
                id: p.patient_id.clone(),
                year_of_birth: p.year_of_birth,
                gender: p.gender,
                registration: p.registration_date,
                death: p.death_date,
                last_active: p.registration_date,
            });
        }
        let mut patients = sorted;

        let mut drugs = Interner::default();
        let mut event_codes = Interner::default();
        let mut rx: Vec<Vec<Entry>> = vec![Vec::new(); patients.len()];
        let mut ev: Vec<Vec<Entry>> = vec![Vec::new(); patients.len()];

        let mut place = |file: &str,
                         line: u64,
                         patient_id: &str,
                         date: Day|
         -> Result<PatientIdx, StoreError> {
            let idx = *patient_index
                .get(patient_id)
                .ok_or_else(|| StoreError::UnknownPatient {
                    file: file.into(),
                    line,
                    patient_id: patient_id.into(),
                })?;
            let p = &mut patients[idx as usize];
            if date < p.registration {
                return Err(StoreError::BeforeRegistration {
                    file: file.into(),
                    line,
                    patient_id: patient_id.into(),
                    date,
                    registration: p.registration,
                });
            }
            p.last_active = p.last_active.max(date);
            Ok(idx)
        };

        for (i, r) in prescriptions.iter().enumerate() {
            let idx = place("prescriptions", i as u64 + 2, &r.patient_id, r.date)?;
            let code = drugs.intern(&r.drug_code);
            rx[idx as usize].push(Entry { day: r.date, code });
        }
        for (i, r) in events.iter().enumerate() {
            let idx = place("events", i as u64 + 2, &r.patient_id, r.date)?;
            let code = event_codes.intern(&r.event_code);
            ev[idx as usize].push(Entry { day: r.date, code });
        }
        for p in patients.iter_mut() {
            if let Some(d) = p.death {
                p.last_active = p.last_active.max(d);
            }
        }

        let mut duplicates_collapsed = 0;
        for list in rx.iter_mut().chain(ev.iter_mut()) {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            duplicates_collapsed += before - list.len();
        }
        if duplicates_collapsed > 0 {
            log::warn!("collapsed {duplicates_collapsed} duplicate record rows");
        }

        Ok(Database {
            patients,
            patient_index,
            prescriptions: rx,
            events: ev,
            drugs,
            event_codes,
            duplicates_collapsed,
        })
    }

    /// Loads the three CSV inputs.
    pub fn load(
        prescriptions_path: impl AsRef<Path>,
        events_path: impl AsRef<Path>,
        patients_path: impl AsRef<Path>,
    ) -> Result<Database, StoreError> {
        let patients = read_patients(open(patients_path.as_ref())?, &label(patients_path.as_ref()))?;
        let prescriptions = read_prescriptions(
            open(prescriptions_path.as_ref())?,
            &label(prescriptions_path.as_ref()),
        )?;
        let events = read_events(open(events_path.as_ref())?, &label(events_path.as_ref()))?;
        Database::from_records(patients, prescriptions, events)
            .map_err(|e| relabel(e, prescriptions_path.as_ref(), events_path.as_ref(), patients_path.as_ref()))
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn patient(&self, idx: PatientIdx) -> &Patient {
        &self.patients[idx as usize]
    }

    pub fn patient_idx(&self, patient_id: &str) -> Option<PatientIdx> {
        self.patient_index.get(patient_id).copied()
    }

    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn prescriptions_of(&self, idx: PatientIdx) -> &[Entry] {
        &self.prescriptions[idx as usize]
    }

    pub fn events_of(&self, idx: PatientIdx) -> &[Entry] {
        &self.events[idx as usize]
    }

    pub fn events_in(&self, idx: PatientIdx, window: Window) -> &[Entry] {
        entries_in(&self.events[idx as usize], window)
    }

    pub fn prescriptions_in(&self, idx: PatientIdx, window: Window) -> &[Entry] {
        entries_in(&self.prescriptions[idx as usize], window)
    }

    /// True when the patient has an event with `code` inside `window`.
    pub fn has_event(&self, idx: PatientIdx, window: Window, code: CodeId) -> bool {
        self.events_in(idx, window).iter().any(|e| e.code == code)
    }

    pub fn drugs(&self) -> &Interner {
        &self.drugs
    }

    pub fn event_codes(&self) -> &Interner {
        &self.event_codes
    }

    pub fn duplicates_collapsed(&self) -> usize {
        self.duplicates_collapsed
    }

    pub fn n_prescriptions(&self) -> usize {
        self.prescriptions.iter().map(Vec::len).sum()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    /// Number of events with `event_code` dated inside the closed window.
    pub fn count_events_in_window(
        &self,
        patient_id: &str,
        window_start: Day,
        window_end: Day,
        event_code: &str,
    ) -> Result<usize, StoreError> {
        let idx = self
            .patient_idx(patient_id)
            .ok_or_else(|| StoreError::NoSuchPatient(patient_id.into()))?;
        let Some(code) = self.event_codes.get(event_code) else {
            return Ok(0);
        };
        Ok(self
            .events_in(idx, Window::new(window_start, window_end))
            .iter()
            .filter(|e| e.code == code)
            .count())
    }

    /// Writes the store back out in the input CSV schemas.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<(), StoreError> {
        let dir = dir.as_ref();
        let io = |file: &Path, source: std::io::Error| StoreError::Io {
            file: file.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;

        let path = dir.join("patients.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(PATIENT_COLUMNS).map_err(|e| csv_err(&path, e))?;
        for p in &self.patients {
            let death = p.death.map(|d| d.to_string()).unwrap_or_default();
            w.write_record([
                p.id.as_str(),
                &p.year_of_birth.to_string(),
                p.gender.as_str(),
                &p.registration.to_string(),
                &death,
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| io(&path, e))?;

        for (name, header, lists, codes) in [
            ("prescriptions.csv", PRESCRIPTION_COLUMNS, &self.prescriptions, &self.drugs),
            ("events.csv", EVENT_COLUMNS, &self.events, &self.event_codes),
        ] {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            w.write_record(header).map_err(|e| csv_err(&path, e))?;
            for (p, list) in self.patients.iter().zip(lists.iter()) {
                for e in list {
                    w.write_record([p.id.as_str(), codes.name(e.code), &e.day.to_string()])
                        .map_err(|e| csv_err(&path, e))?;
                }
            }
            w.flush().map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

pub const PATIENT_COLUMNS: [&str; 5] = [
    "patient_id",
    "year_of_birth",
    "gender",
    "registration_date",
    "death_date",
];
pub const PRESCRIPTION_COLUMNS: [&str; 3] = ["patient_id", "drug_code", "date"];
pub const EVENT_COLUMNS: [&str; 3] = ["patient_id", "event_code", "date"];

fn label(p: &Path) -> String {
    p.display().to_string()
}

fn csv_err(p: &Path, source: csv::Error) -> StoreError {
    StoreError::Csv {
        file: label(p),
        source,
    }
}

fn open(p: &Path) -> Result<File, StoreError> {
    File::open(p).map_err(|source| StoreError::Io {
        file: label(p),
        source,
    })
}

fn relabel(e: StoreError, rx: &Path, ev: &Path, pt: &Path) -> StoreError {
    let fix = |file: String| match file.as_str() {
        "prescriptions" => label(rx),
        "events" => label(ev),
        "patients" => label(pt),
        _ => file,
    };
    match e {
        StoreError::UnknownPatient {
            file,
            line,
            patient_id,
        } => StoreError::UnknownPatient {
            file: fix(file),
            line,
            patient_id,
        },
        StoreError::BeforeRegistration {
            file,
            line,
            patient_id,
            date,
            registration,
        } => StoreError::BeforeRegistration {
            file: fix(file),
            line,
            patient_id,
            date,
            registration,
        },
        StoreError::DuplicatePatient {
            file,
            line,
            patient_id,
        } => StoreError::DuplicatePatient {
            file: fix(file),
            line,
            patient_id,
        },
        other => other,
    }
}

struct Columns {
    idx: Vec<usize>,
}

impl Columns {
    fn resolve(
        headers: &csv::StringRecord,
        wanted: &[&'static str],
        optional: &[&'static str],
        file: &str,
    ) -> Result<Columns, StoreError> {
        let mut idx = Vec::with_capacity(wanted.len());
        for &col in wanted {
            match headers.iter().position(|h| h.trim() == col) {
                Some(i) => idx.push(i),
                None if optional.contains(&col) => idx.push(usize::MAX),
                None => {
                    return Err(StoreError::MissingColumn {
                        file: file.into(),
                        column: col,
                    })
                }
            }
        }
        Ok(Columns { idx })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, i: usize) -> &'r str {
        rec.get(self.idx[i]).unwrap_or("").trim()
    }
}

fn records<R: Read>(
    reader: R,
    file: &str,
    wanted: &[&'static str],
    optional: &[&'static str],
    mut row: impl FnMut(&Columns, &csv::StringRecord, u64) -> Result<(), StoreError>,
) -> Result<(), StoreError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|source| StoreError::Csv {
            file: file.into(),
            source,
        })?
        .clone();
    let cols = Columns::resolve(&headers, wanted, optional, file)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|source| StoreError::Csv {
            file: file.into(),
            source,
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        row(&cols, &rec, line)?;
    }
    Ok(())
}

fn malformed(file: &str, line: u64, message: String) -> StoreError {
    StoreError::Malformed {
        file: file.into(),
        line,
        message,
    }
}

fn required<'a>(file: &str, line: u64, what: &str, v: &'a str) -> Result<&'a str, StoreError> {
    if v.is_empty() {
        Err(malformed(file, line, format!("missing {what}")))
    } else {
        Ok(v)
    }
}

fn date(file: &str, line: u64, what: &str, v: &str) -> Result<Day, StoreError> {
    Day::parse(required(file, line, what, v)?)
        .ok_or_else(|| malformed(file, line, format!("bad {what} {v:?}")))
}

pub fn read_patients<R: Read>(reader: R, file: &str) -> Result<Vec<PatientRecord>, StoreError> {
    let mut out = Vec::new();
    records(reader, file, &PATIENT_COLUMNS, &["death_date"], |c, rec, line| {
        let patient_id = required(file, line, "patient_id", c.get(rec, 0))?.to_owned();
        let yob = c.get(rec, 1);
        let year_of_birth = yob
            .parse::<i32>()
            .map_err(|_| malformed(file, line, format!("bad year_of_birth {yob:?}")))?;
        let g = c.get(rec, 2);
        let gender =
            Gender::parse(g).ok_or_else(|| malformed(file, line, format!("bad gender {g:?}")))?;
        let registration_date = date(file, line, "registration_date", c.get(rec, 3))?;
        let death_raw = c.get(rec, 4);
        let death_date = if death_raw.is_empty() {
            None
        } else {
            Some(date(file, line, "death_date", death_raw)?)
        };
        if let Some(d) = death_date {
            if d < registration_date {
                return Err(malformed(file, line, "death_date precedes registration_date".into()));
            }
        }
        out.push(PatientRecord {
            patient_id,
            year_of_birth,
            gender,
            registration_date,
            death_date,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_prescriptions<R: Read>(
    reader: R,
    file: &str,
) -> Result<Vec<PrescriptionRecord>, StoreError> {
    let mut out = Vec::new();
    records(reader, file, &PRESCRIPTION_COLUMNS, &[], |c, rec, line| {
        out.push(PrescriptionRecord {
            patient_id: required(file, line, "patient_id", c.get(rec, 0))?.to_owned(),
            drug_code: required(file, line, "drug_code", c.get(rec, 1))?.to_owned(),
            date: date(file, line, "date", c.get(rec, 2))?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_events<R: Read>(reader: R, file: &str) -> Result<Vec<EventRecord>, StoreError> {
    let mut out = Vec::new();
    records(reader, file, &EVENT_COLUMNS, &[], |c, rec, line| {
        out.push(EventRecord {
            patient_id: required(file, line, "patient_id", c.get(rec, 0))?.to_owned(),
            event_code: required(file, line, "event_code", c.get(rec, 1))?.to_owned(),
            date: date(file, line, "date", c.get(rec, 2))?,
        });
        Ok(())
    })?;
    Ok(out)
}
