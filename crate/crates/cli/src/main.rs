use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lodsig::manifest::{GenerateSpec, ManifestError, ManifestFile, Overrides, Preset, RunManifest};
use lodsig_core::synth::{generate, SynthConfig};

/// Detect adverse drug reaction signals in longitudinal records.
#[derive(Debug, Parser)]
#[command(name = "lodsig", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic database and its ground truth.
    Generate {
        /// Built-in configuration.
        #[arg(long, value_enum, conflicts_with = "config")]
        preset: Option<Preset>,
        /// Generator configuration file (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of patients.
        #[arg(long)]
        patients: Option<usize>,
        #[arg(long, default_value = "lodsig-data")]
        output: PathBuf,
    },
    /// Rank events for every drug and algorithm in a manifest, then evaluate.
    Run {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Overrides the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the manifest output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Generate a built-in synthetic database instead of loading one.
        #[arg(long, value_enum)]
        generate: Option<Preset>,
        /// Run all seven algorithm configurations.
        #[arg(long)]
        all_algorithms: bool,
    },
    /// Rebuild precision tables and MAP chart data from a run's eval files.
    Summarize {
        #[arg(long)]
        output: PathBuf,
    },
}

fn generate_cmd(preset: Option<Preset>, config: Option<&Path>, seed: Option<u64>, patients: Option<usize>, output: &Path) -> Result<()> {
    let mut synth = match (preset, config) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SynthConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (Some(p), None) => p.config(),
        (None, None) => bail!("generate needs --preset or --config"),
    };
    if let Some(n) = patients {
        synth.n_patients = n;
    }
    let spec = GenerateSpec { preset: None, n_patients: None, synth: Some(synth.clone()) };
    let synth = spec.resolve(seed.unwrap_or(synth.rng_seed))?;
    let data = generate(&synth)?;
    data.write(output)?;
    println!(
        "wrote {} patients, {} prescriptions, {} events and {} ground-truth entries to {}",
        data.db.n_patients(),
        data.db.n_prescriptions(),
        data.db.n_events(),
        data.truth.len(),
        output.display()
    );
    Ok(())
}

fn run_cmd(manifest: Option<&Path>, overrides: Overrides, jobs: Option<usize>) -> Result<bool> {
    let resolved = match manifest {
        Some(path) => RunManifest::load(path, &overrides)?,
        None if overrides.generate.is_some() => {
            let cwd = std::env::current_dir()?;
            RunManifest::resolve(ManifestFile::default(), &cwd, &overrides)?
        }
        None => bail!(ManifestError::Invalid("run needs --manifest or --generate".into())),
    };
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let outcome = lodsig::run(&resolved, jobs)?;
    println!(
        "{} of {} units written to {}",
        outcome.units.len(),
        outcome.units.len() + outcome.failures.len(),
        resolved.output_dir.display()
    );
    for (drug, alg, e) in &outcome.failures {
        eprintln!("failed: {drug}/{alg}: {e}");
    }
    Ok(outcome.ok())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LODSIG_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { preset, config, seed, patients, output } => {
            generate_cmd(preset, config.as_deref(), seed, patients, &output).map(|()| true)
        }
        Command::Run { manifest, seed, jobs, output, generate, all_algorithms } => {
            let overrides = Overrides { seed, output_dir: output, generate, all_algorithms };
            run_cmd(manifest.as_deref(), overrides, jobs)
        }
        Command::Summarize { output } => lodsig::summarize(&output).map(|s| {
            println!("wrote {} summary files, {} warnings", s.written.len(), s.warnings.len());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ManifestError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
