//! Recite-and-answer closed-book QA harness.
//!
//! This crate carries everything that touches the outside world on top of
//! [`recite_core`]: line-delimited record files, generation backends (remote
//! HTTP and scripted), the answering pipeline, passage-hint corpora and
//! synthetic data export, BM25 index persistence, dataset adapters, prompt-set
//! loading, and the `recite` command-line tool.

pub mod backend;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod datasets;
pub mod fingerprint;
pub mod index_file;
pub mod jsonl;
pub mod pipeline;
pub mod promptset;
pub mod report_io;

pub use recite_core as core;
