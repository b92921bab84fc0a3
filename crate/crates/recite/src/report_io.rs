//! Report files written next to a run's records.
//!
//! `report.json` holds the full [`EvalReport`], `categories.txt` and
//! `quadrants.txt` the two breakdown tables, and `curve.csv` the
//! path-count subsampling curve for external plotting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use recite_core::eval::{mean_std, CurvePoint, EvalReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ReportIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn write(path: &Path, text: &str) -> Result<(), ReportIoError> {
    std::fs::write(path, text).map_err(|source| ReportIoError::Io { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportIoError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| ReportIoError::Json { path: path.into(), source })?;
    text.push('\n');
    write(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ReportIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportIoError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| ReportIoError::Json { path: path.into(), source })
}

/// Write `report.json`, `categories.txt` and `quadrants.txt` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(), ReportIoError> {
    write_json(&dir.join("report.json"), report)?;
    write(&dir.join("categories.txt"), &report.category_table())?;
    write(&dir.join("quadrants.txt"), &report.quadrant_table())
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("paths,trials,em_mean,em_std,f1_mean,f1_std\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            p.paths,
            p.trials.len(),
            p.em_mean,
            p.em_std,
            p.f1_mean,
            p.f1_std
        );
    }
    out
}

pub fn write_curve(path: &Path, points: &[CurvePoint]) -> Result<(), ReportIoError> {
    write(path, &curve_csv(points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub em: f64,
    pub f1: f64,
    pub n_failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seeds: Vec<SeedResult>,
    pub em_mean: f64,
    pub em_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl SweepSummary {
    pub fn new(seeds: Vec<SeedResult>) -> Self {
        let ems: Vec<f64> = seeds.iter().map(|s| s.em).collect();
        let f1s: Vec<f64> = seeds.iter().map(|s| s.f1).collect();
        let (em_mean, em_std) = mean_std(&ems);
        let (f1_mean, f1_std) = mean_std(&f1s);
        SweepSummary { seeds, em_mean, em_std, f1_mean, f1_std }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "EM {:.2} ± {:.2} / F1 {:.2} ± {:.2} over {} seeds",
            100.0 * self.em_mean,
            100.0 * self.em_std,
            100.0 * self.f1_mean,
            100.0 * self.f1_std,
            self.seeds.len()
        )
    }
}
