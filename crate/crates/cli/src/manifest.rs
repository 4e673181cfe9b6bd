//! Run manifests.
//!
//! A manifest is a TOML file. Relative paths inside it resolve against the
//! directory holding the manifest.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//! drugs = ["DRUG_A", "DRUG_B"]
//! ground_truth = "data/ground_truth.csv"
//! evaluate = true
//! alpha = 0.01
//! algorithms = [
//!     "oe1",
//!     "oe2",
//!     "ror05",
//!     { id = "mutara60", overrides = { pre_window_days = 90 } },
//! ]
//!
//! [database]
//! patients = "data/patients.csv"
//! prescriptions = "data/prescriptions.csv"
//! events = "data/events.csv"
//!
//! [study]
//! risk_window_days = 30
//! ```
//!
//! `algorithms` entries are either bare ids or tables with `id` and
//! `overrides`. A `[generate]` table (`preset = "demo"` or a full
//! `[generate.synth]` configuration) builds a synthetic database into
//! `<output_dir>/data` and uses it in place of `[database]`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use lodsig_core::cohort::StudyConfig;
use lodsig_core::eval::report::path_component;
use lodsig_core::ranking::AlgorithmId;
use lodsig_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESOLVED_MANIFEST: &str = "manifest.resolved.toml";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{file}: {source}")]
    Read {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    Parse {
        file: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(message: impl Into<String>) -> Result<T, ManifestError> {
    Err(ManifestError::Invalid(message.into()))
}

/// Study settings that a manifest, a defaults file or an algorithm entry
/// may set. Unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyOverrides {
    pub risk_window_days: Option<i32>,
    pub pre_window_days: Option<i32>,
    pub control_period_months: Option<(u32, u32)>,
    pub include_day0: Option<bool>,
    pub excluded_event_codes: Option<BTreeSet<String>>,
}

impl StudyOverrides {
    pub fn apply(&self, config: &mut StudyConfig) {
        if let Some(v) = self.risk_window_days {
            config.risk_window_days = v;
        }
        if let Some(v) = self.pre_window_days {
            config.pre_window_days = v;
        }
        if let Some(v) = self.control_period_months {
            config.control_period_months = v;
        }
        if let Some(v) = self.include_day0 {
            config.include_day0 = v;
        }
        if let Some(v) = &self.excluded_event_codes {
            config.excluded_event_codes = v.clone();
        }
    }

    /// Every field set from `config`.
    pub fn of(config: &StudyConfig) -> StudyOverrides {
        StudyOverrides {
            risk_window_days: Some(config.risk_window_days),
            pre_window_days: Some(config.pre_window_days),
            control_period_months: Some(config.control_period_months),
            include_day0: Some(config.include_day0),
            excluded_event_codes: Some(config.excluded_event_codes.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub id: AlgorithmId,
    #[serde(default)]
    pub overrides: StudyOverrides,
}

impl AlgorithmSpec {
    pub fn new(id: AlgorithmId) -> Self {
        AlgorithmSpec { id, overrides: StudyOverrides::default() }
    }

    /// The study configuration for `drug`: base settings, then the
    /// algorithm's own pre-window, then explicit overrides.
    pub fn study_config(&self, base: &StudyConfig, drug: &str) -> StudyConfig {
        let mut c = StudyConfig { drug_code: drug.to_owned(), ..base.clone() };
        if let Some(pre) = self.id.pre_window_days() {
            c.pre_window_days = pre;
        }
        self.overrides.apply(&mut c);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabasePaths {
    pub patients: PathBuf,
    pub prescriptions: PathBuf,
    pub events: PathBuf,
}

impl DatabasePaths {
    pub fn in_dir(dir: &Path) -> Self {
        DatabasePaths {
            patients: dir.join("patients.csv"),
            prescriptions: dir.join("prescriptions.csv"),
            events: dir.join("events.csv"),
        }
    }

    fn map(&self, f: impl Fn(&Path) -> PathBuf) -> Self {
        DatabasePaths {
            patients: f(&self.patients),
            prescriptions: f(&self.prescriptions),
            events: f(&self.events),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 5,000 patients, three drugs, every injection kind.
    Demo,
    /// 50,000 patients, one studied drug with five ADRs and matched noise.
    Benchmark,
}

impl Preset {
    pub fn config(self) -> SynthConfig {
        match self {
            Preset::Demo => SynthConfig::demo(),
            Preset::Benchmark => SynthConfig::recovery_benchmark(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_patients: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl GenerateSpec {
    pub fn preset(preset: Preset) -> Self {
        GenerateSpec { preset: Some(preset), n_patients: None, synth: None }
    }

    /// The generator configuration with the run seed applied.
    pub fn resolve(&self, seed: u64) -> Result<SynthConfig, ManifestError> {
        let mut config = match (self.preset, &self.synth) {
            (Some(p), None) => p.config(),
            (None, Some(s)) => s.clone(),
            (Some(_), Some(_)) => return invalid("[generate] takes either preset or synth, not both"),
            (None, None) => return invalid("[generate] needs preset or synth"),
        };
        if let Some(n) = self.n_patients {
            config.n_patients = n;
        }
        config.rng_seed = seed;
        config.validate().map_err(|e| ManifestError::Invalid(format!("[generate]: {e}")))?;
        Ok(config)
    }
}

/// The manifest as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub drugs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database: Option<DatabasePaths>,
    #[serde(default)]
    pub study: StudyOverrides,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

/// A bare id or a full table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgorithmEntry {
    Id(String),
    Spec(toml::Table),
}

impl AlgorithmEntry {
    pub fn id(&self) -> Result<String, ManifestError> {
        Ok(self.resolve()?.id.as_str().to_owned())
    }

    pub fn resolve(&self) -> Result<AlgorithmSpec, ManifestError> {
        match self {
            AlgorithmEntry::Id(s) => s
                .parse()
                .map(AlgorithmSpec::new)
                .map_err(|e: lodsig_core::ranking::UnknownAlgorithm| ManifestError::Invalid(e.to_string())),
            AlgorithmEntry::Spec(t) => {
                if let Some(toml::Value::String(id)) = t.get("id") {
                    id.parse::<AlgorithmId>().map_err(|e| ManifestError::Invalid(e.to_string()))?;
                }
                if t.get("overrides").and_then(|o| o.get("rng_seed")).is_some() {
                    return invalid("algorithm overrides cannot set rng_seed; the run seed drives every draw");
                }
                AlgorithmSpec::deserialize(toml::Value::Table(t.clone()))
                    .map_err(|e| ManifestError::Invalid(format!("algorithm entry: {}", e.message())))
            }
        }
    }
}

impl ManifestFile {
    pub fn parse(text: &str, file: &str) -> Result<ManifestFile, ManifestError> {
        toml::from_str(text).map_err(|e| ManifestError::Parse { file: file.into(), source: Box::new(e) })
    }

    pub fn load(path: &Path) -> Result<ManifestFile, ManifestError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Read { file: file.clone(), source })?;
        ManifestFile::parse(&text, &file)
    }
}

/// Command-line settings layered over the manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub generate: Option<Preset>,
    pub all_algorithms: bool,
}

/// A validated manifest with every default filled in and paths absolute
/// or relative to the working directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub drugs: Vec<String>,
    pub algorithms: Vec<AlgorithmSpec>,
    pub database: DatabasePaths,
    pub ground_truth: Option<PathBuf>,
    pub evaluate: bool,
    pub alpha: f64,
    /// Base study configuration; drug and algorithm settings are layered on top.
    pub study: StudyConfig,
    pub generate: Option<SynthConfig>,
}

pub const DEFAULT_OUTPUT_DIR: &str = "lodsig-out";
pub const DEFAULT_ALPHA: f64 = 0.01;

impl RunManifest {
    /// Validates `file` read from `base_dir`, applying `cli` on top.
    pub fn resolve(file: ManifestFile, base_dir: &Path, cli: &Overrides) -> Result<RunManifest, ManifestError> {
        let at = |p: &Path| {
            let joined = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
            joined.components().filter(|c| *c != std::path::Component::CurDir).collect::<PathBuf>()
        };
        let seed = cli.seed.unwrap_or(file.seed);
        let output_dir = match (&cli.output_dir, &file.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => at(o),
            (None, None) => base_dir.join(DEFAULT_OUTPUT_DIR),
        };

        let mut algorithms: Vec<AlgorithmSpec> = file.algorithms.iter().map(AlgorithmEntry::resolve).collect::<Result<_, _>>()?;
        let mut seen = BTreeSet::new();
        for a in &algorithms {
            if !seen.insert(a.id) {
                return invalid(format!("algorithm {} listed twice", a.id));
            }
        }
        if cli.all_algorithms {
            for id in AlgorithmId::ALL {
                if !seen.contains(&id) {
                    algorithms.push(AlgorithmSpec::new(id));
                }
            }
            algorithms.sort_by_key(|a| a.id);
        }
        if algorithms.is_empty() {
            return invalid("no algorithms requested");
        }

        let generate_spec = match cli.generate {
            Some(p) => Some(GenerateSpec {
                preset: Some(p),
                n_patients: file.generate.as_ref().and_then(|g| g.n_patients),
                synth: None,
            }),
            None => file.generate.clone(),
        };
        let generate = generate_spec.map(|g| g.resolve(seed)).transpose()?;
        let data_dir = output_dir.join("data");
        let database = match (&generate, &file.database) {
            (Some(_), _) => DatabasePaths::in_dir(&data_dir),
            (None, Some(d)) => d.map(at),
            (None, None) => return invalid("no [database] paths and nothing to generate"),
        };
        let ground_truth = match (&generate, &file.ground_truth) {
            (_, Some(g)) => Some(at(g)),
            (Some(_), None) => Some(data_dir.join("ground_truth.csv")),
            (None, None) => None,
        };
        let evaluate = file.evaluate.unwrap_or(ground_truth.is_some());
        if evaluate && ground_truth.is_none() {
            return invalid("evaluation requested but no ground_truth file given");
        }
        if let (Some(g), None) = (&ground_truth, &generate) {
            if evaluate && !g.is_file() {
                return invalid(format!("ground truth file {} not found", g.display()));
            }
        }

        let drugs = if file.drugs.is_empty() {
            match &generate {
                Some(g) => g.drugs.iter().map(|d| d.drug_code.clone()).collect(),
                None => return invalid("no drugs listed"),
            }
        } else {
            file.drugs.clone()
        };
        let mut unique = BTreeSet::new();
        for d in &drugs {
            if !unique.insert(path_component(d)) {
                return invalid(format!("drug {d:?} listed twice or shares its output file name with another drug"));
            }
        }

        let alpha = file.alpha.unwrap_or(DEFAULT_ALPHA);
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
        }

        let mut study = StudyConfig { rng_seed: seed, ..StudyConfig::default() };
        if let Some(p) = &file.config_path {
            let path = at(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|source| ManifestError::Read { file: path.display().to_string(), source })?;
            let defaults: StudyOverrides = toml::from_str(&text)
                .map_err(|e| ManifestError::Parse { file: path.display().to_string(), source: Box::new(e) })?;
            defaults.apply(&mut study);
        }
        file.study.apply(&mut study);
        for a in &algorithms {
            let c = a.study_config(&study, "validation");
            c.validate().map_err(|e| ManifestError::Invalid(format!("algorithm {}: {e}", a.id)))?;
        }

        Ok(RunManifest {
            seed,
            output_dir,
            drugs,
            algorithms,
            database,
            ground_truth,
            evaluate,
            alpha,
            study,
            generate,
        })
    }

    /// Loads and resolves a manifest file.
    pub fn load(path: &Path, cli: &Overrides) -> Result<RunManifest, ManifestError> {
        let file = ManifestFile::load(path)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        RunManifest::resolve(file, base, cli)
    }

    /// A manifest echo with every setting explicit. Paths under the output
    /// directory are written relative to it, so the echo is identical for
    /// identical runs into different directories and can be rerun from
    /// inside the output directory.
    pub fn echo(&self) -> ManifestFile {
        let rel = |p: &Path| p.strip_prefix(&self.output_dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
        let algorithms = self
            .algorithms
            .iter()
            .map(|a| {
                let full = StudyOverrides::of(&a.study_config(&self.study, ""));
                let table = toml::Table::try_from(AlgorithmSpec { id: a.id, overrides: full }).expect("serializable");
                AlgorithmEntry::Spec(table)
            })
            .collect();
        ManifestFile {
            seed: self.seed,
            output_dir: Some(PathBuf::from(".")),
            drugs: self.drugs.clone(),
            ground_truth: self.ground_truth.as_deref().map(rel),
            evaluate: Some(self.evaluate),
            alpha: Some(self.alpha),
            config_path: None,
            database: if self.generate.is_some() { None } else { Some(self.database.map(rel)) },
            study: StudyOverrides::of(&self.study),
            algorithms,
            generate: self.generate.clone().map(|s| GenerateSpec { preset: None, n_patients: None, synth: Some(s) }),
        }
    }

    pub fn echo_toml(&self) -> String {
        toml::to_string(&self.echo()).expect("manifest serializes")
    }

    /// Units in execution and output order: drugs outer, algorithms inner.
    pub fn units(&self) -> Vec<(String, AlgorithmSpec)> {
        self.drugs
            .iter()
            .flat_map(|d| self.algorithms.iter().map(move |a| (d.clone(), a.clone())))
            .collect()
    }

    /// Expected (drug, algorithm) pairs.
    pub fn expected(&self) -> BTreeSet<(String, String)> {
        self.units().into_iter().map(|(d, a)| (d, a.id.as_str().to_owned())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<RunManifest, ManifestError> {
        RunManifest::resolve(ManifestFile::parse(text, "m.toml")?, Path::new("/base"), &Overrides::default())
    }

    const DB: &str = "[database]\npatients = \"p.csv\"\nprescriptions = \"rx.csv\"\nevents = \"ev.csv\"\n";

    #[test]
    fn bare_ids_and_tables() {
        let m = resolve(&format!(
            "drugs = [\"X\"]\nalgorithms = [\"oe1\", {{ id = \"mutara60\", overrides = {{ pre_window_days = 90 }} }}]\n{DB}"
        ))
        .unwrap();
        assert_eq!(m.algorithms.len(), 2);
        assert_eq!(m.algorithms[1].study_config(&m.study, "X").pre_window_days, 90);
        assert_eq!(m.database.events, Path::new("/base/ev.csv"));
        assert_eq!(m.output_dir, Path::new("/base/lodsig-out"));
        assert!(!m.evaluate);
    }

    #[test]
    fn unknown_and_duplicate_ids_are_rejected() {
        let e = resolve(&format!("drugs = [\"X\"]\nalgorithms = [\"mutara90\"]\n{DB}")).unwrap_err();
        assert!(e.to_string().contains("mutara90"), "{e}");
        let e = resolve(&format!("drugs = [\"X\"]\n{DB}\n[[algorithms]]\nid = \"bogus\"\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = resolve(&format!("drugs = [\"X\"]\nalgorithms = [\"oe1\", \"oe1\"]\n{DB}")).unwrap_err();
        assert!(e.to_string().contains("twice"));
    }

    #[test]
    fn evaluation_needs_truth() {
        let e = resolve(&format!("drugs = [\"X\"]\nevaluate = true\nalgorithms = [\"oe1\"]\n{DB}")).unwrap_err();
        assert!(e.to_string().contains("ground_truth"));
    }

    #[test]
    fn algorithm_window_beats_study_but_not_overrides() {
        let m = resolve(&format!(
            "drugs = [\"X\"]\nalgorithms = [\"hunt180\", \"oe1\"]\n{DB}[study]\npre_window_days = 7\nrisk_window_days = 20\n"
        ))
        .unwrap();
        let hunt = m.algorithms[0].study_config(&m.study, "X");
        assert_eq!((hunt.pre_window_days, hunt.risk_window_days), (180, 20));
        assert_eq!(m.algorithms[1].study_config(&m.study, "X").pre_window_days, 7);
    }

    #[test]
    fn echo_round_trips() {
        let m = RunManifest::resolve(
            ManifestFile { seed: 5, ..Default::default() },
            Path::new("/base"),
            &Overrides { generate: Some(Preset::Demo), all_algorithms: true, ..Default::default() },
        )
        .unwrap();
        let text = m.echo_toml();
        let again = RunManifest::resolve(ManifestFile::parse(&text, "echo").unwrap(), &m.output_dir, &Overrides::default()).unwrap();
        assert_eq!((&again.output_dir, &again.database, &again.ground_truth), (&m.output_dir, &m.database, &m.ground_truth));
        assert_eq!((again.seed, &again.drugs, &again.generate), (m.seed, &m.drugs, &m.generate));
        let effective = |r: &RunManifest| -> Vec<_> { r.algorithms.iter().map(|a| (a.id, a.study_config(&r.study, "X"))).collect() };
        assert_eq!(effective(&again), effective(&m));
        assert_eq!(again.echo_toml(), text);
        assert!(!text.contains("/base"));
    }

    #[test]
    fn module_example_parses() {
        let doc: String = include_str!("manifest.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| format!("{}\n", l.trim_start_matches("//!").strip_prefix(' ').unwrap_or("")))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("data")).unwrap();
        std::fs::write(dir.path().join("data/ground_truth.csv"), "").unwrap();
        let m = RunManifest::resolve(ManifestFile::parse(&doc, "example").unwrap(), dir.path(), &Overrides::default()).unwrap();
        assert_eq!(m.algorithms.len(), 4);
        let mutara = m.algorithms[3].study_config(&m.study, "DRUG_A");
        assert_eq!((mutara.pre_window_days, mutara.risk_window_days), (90, 30));
        assert_eq!(m.output_dir, dir.path().join("out"));
    }
}
