//! Allocation-only core of the recite-and-answer question answering harness.
//!
//! Everything in this crate is a pure function over in-memory values: prompt
//! assembly, answer extraction, plurality voting, answer normalization and
//! EM/F1 scoring, per-question and per-path error analysis, Okapi BM25, and the
//! passage-hint grammar. IO, backends, orchestration, and the CLI live in the
//! `recite` crate.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Floating point transcendental functions go through [`libm`] in
//! both configurations so scores are bit-identical across builds.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bm25;
pub mod eval;
pub mod extract;
pub mod hint;
mod math;
pub mod model;
pub mod prompting;

pub use model::{
    Dataset, Exemplar, PathStatus, QuestionRecord, RecitationPath, RunRecord, SamplingParams,
    Scheme, Strategy, Validate,
};
