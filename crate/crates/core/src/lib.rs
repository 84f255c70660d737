//! Named entity recognition for noisy business-call transcripts, built around a
//! teacher-student compression workflow that runs on a single CPU.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`corpus`]: labeled-utterance data model, BIO tag codec, ASR-style noise
//!   simulator, synthetic corpus generator, and JSONL persistence.
//! - [`tagger`]: a from-scratch transformer-encoder token classifier with
//!   deterministic training, exact gradients, and versioned checkpoints.
//! - [`distill`]: teacher fine-tuning, entity-likelihood pool sampling,
//!   pseudo-labeling, and the two-stage student recipe.
//! - [`eval`]: entity-level exact-span precision/recall/F1.
//! - [`bench`]: single-thread CPU latency measurement and speedup/retention
//!   reporting.
//!
//! Everything is deterministic given the seeds recorded in the run reports;
//! rerunning a pipeline from its recorded configuration reproduces checkpoints
//! byte for byte.

pub mod bench;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod eval;
pub mod tagger;
mod util;

pub use error::{Error, Result};
