use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyClass {
    Frequent,
    LessFrequent,
    Rare,
}

impl FrequencyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyClass::Frequent => "frequent",
            FrequencyClass::LessFrequent => "less_frequent",
            FrequencyClass::Rare => "rare",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "frequent" | "common" => Some(FrequencyClass::Frequent),
            "less_frequent" | "less_common" => Some(FrequencyClass::LessFrequent),
            "rare" => Some(FrequencyClass::Rare),
            _ => None,
        }
    }
}

impl fmt::Display for FrequencyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdrEntry {
    pub frequency_class: FrequencyClass,
    /// Event code explicitly denoting a reaction to the drug or a change
    /// of prescription.
    pub is_reaction_code: bool,
}

/// Known (drug, event) adverse reactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdrDictionary {
    entries: BTreeMap<(String, String), AdrEntry>,
}

pub const DICTIONARY_COLUMNS: [&str; 4] =
    ["drug_code", "event_code", "frequency_class", "is_reaction_code"];

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Some(true),
        "false" | "0" | "no" | "n" | "" => Some(false),
        _ => None,
    }
}

impl AdrDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry; returns false if the key was already present.
    pub fn insert(&mut self, drug_code: &str, event_code: &str, entry: AdrEntry) -> bool {
        self.entries
            .insert((drug_code.to_owned(), event_code.to_owned()), entry)
            .is_none()
    }

    pub fn get(&self, drug_code: &str, event_code: &str) -> Option<&AdrEntry> {
        self.entries.get(&(drug_code.to_owned(), event_code.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries_for<'a>(&'a self, drug_code: &'a str) -> impl Iterator<Item = (&'a str, &'a AdrEntry)> + 'a {
        self.entries
            .iter()
            .filter(move |((d, _), _)| d == drug_code)
            .map(|((_, e), v)| (e.as_str(), v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &AdrEntry)> {
        self.entries.iter().map(|((d, e), v)| (d.as_str(), e.as_str(), v))
    }

    pub fn read_csv<R: Read>(reader: R, file: &str) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| EvalError::csv(file, e))?.clone();
        let col = |name: &'static str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or(EvalError::MissingColumn { file: file.into(), column: name })
        };
        let [d, e, f, r] = [col("drug_code")?, col("event_code")?, col("frequency_class")?, col("is_reaction_code")?];
        let mut dict = AdrDictionary::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| EvalError::csv(file, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let bad = |message: String| EvalError::Malformed { file: file.into(), line, message };
            if field(d).is_empty() || field(e).is_empty() {
                return Err(bad("missing drug_code or event_code".into()));
            }
            let frequency_class = FrequencyClass::parse(field(f))
                .ok_or_else(|| bad(format!("bad frequency_class {:?}", field(f))))?;
            let is_reaction_code =
                parse_bool(field(r)).ok_or_else(|| bad(format!("bad is_reaction_code {:?}", field(r))))?;
            if !dict.insert(field(d), field(e), AdrEntry { frequency_class, is_reaction_code }) {
                return Err(bad(format!("duplicate entry ({}, {})", field(d), field(e))));
            }
        }
        Ok(dict)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| EvalError::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(DICTIONARY_COLUMNS)?;
        for ((d, e), v) in &self.entries {
            w.write_record([
                d.as_str(),
                e.as_str(),
                v.frequency_class.as_str(),
                if v.is_reaction_code { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let data = "drug_code,event_code,frequency_class,is_reaction_code\n\
                    X,A,rare,false\nX,B,frequent,true\nY,A,less_frequent,0\n";
        let dict = AdrDictionary::read_csv(data.as_bytes(), "gt.csv").unwrap();
        assert_eq!(dict.len(), 3);
        assert_eq!(dict.get("X", "B").unwrap().frequency_class, FrequencyClass::Frequent);
        assert!(dict.get("X", "B").unwrap().is_reaction_code);
        assert_eq!(dict.entries_for("X").count(), 2);
        let mut out = Vec::new();
        dict.write_csv(&mut out).unwrap();
        assert_eq!(AdrDictionary::read_csv(out.as_slice(), "x").unwrap(), dict);
    }

    #[test]
    fn rejects_duplicates_and_bad_classes() {
        let dup = "drug_code,event_code,frequency_class,is_reaction_code\nX,A,rare,false\nX,A,rare,false\n";
        assert!(matches!(
            AdrDictionary::read_csv(dup.as_bytes(), "gt.csv"),
            Err(EvalError::Malformed { line: 3, .. })
        ));
        let bad = "drug_code,event_code,frequency_class,is_reaction_code\nX,A,sometimes,false\n";
        assert!(AdrDictionary::read_csv(bad.as_bytes(), "gt.csv").is_err());
    }
}
