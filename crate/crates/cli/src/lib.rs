//! Library side of the `lodsig` command: manifest handling, the run
//! pipeline and report summaries.

pub mod manifest;
pub mod run;
pub mod summarize;

pub use manifest::{ManifestError, ManifestFile, Overrides, Preset, RunManifest};
pub use run::{run, RunOutcome};
pub use summarize::{summarize, Summary};
