//! Adverse drug reaction signal detection over longitudinal observational
//! databases.
//!
//! The [`store`] module loads and indexes patient histories; [`cohort`]
//! extracts exposure episodes and candidate events; [`srs`], [`ic`] and
//! [`leverage`] implement the ROR05, OE-ratio and MUTARA/HUNT rankers;
//! [`eval`] scores ranked lists against known reactions and [`synth`]
//! produces seeded synthetic databases with ground truth.

pub mod cohort;
pub mod date;
pub mod eval;
pub mod gamma;
pub mod ic;
pub mod leverage;
pub mod ranking;
pub mod srs;
pub mod store;
pub mod synth;

pub use cohort::{candidate_events, cohort_summary, extract_exposures, CohortSummary, ExposureEpisode, StudyConfig};
pub use date::{Day, Window};
pub use eval::{evaluate, AdrDictionary, EvalReport};
pub use ic::{rank_oe, OeVariant};
pub use leverage::{rank_hunt, rank_mutara};
pub use ranking::{AlgorithmId, RankedSignal, RankedSignalList};
pub use srs::rank_ror;
pub use store::{Database, StoreError};
pub use synth::{generate, SynthConfig};
