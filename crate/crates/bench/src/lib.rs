//! Benchmark harness for the ProxiCBO experiments: runs paired-seed trials of
//! every method, writes per-trial and summary CSV tables, and hosts the
//! decay-rate check and a prox self-test.

pub mod config;
pub mod error;
pub mod reference;
pub mod runner;
pub mod selftest;
pub mod theory;

pub use config::BenchConfig;
pub use error::{BenchError, Result};
pub use reference::{reference_minimizer, ReferenceResult, ReferenceSettings};
pub use runner::{run_benchmark, BenchReport, SummaryRow, TrialRecord};
pub use theory::{theory_check, TheoryConfig, TheoryReport};
