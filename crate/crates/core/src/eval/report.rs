use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::analysis::{classify_question, per_path_quadrant, ErrorCategory, PathQuadrant};
use super::normalize::{exact_match, token_f1, NormProfile};
use crate::model::{QuestionRecord, RunRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("run record refers to unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("no run records to evaluate")]
    NoRecords,
    #[error("path count {count} exceeds the {available} paths stored for question {question_id:?}")]
    PathCountTooLarge { count: usize, available: usize, question_id: String },
    #[error("path counts must be positive")]
    ZeroPathCount,
    #[error("at least one trial is required")]
    ZeroTrials,
}

/// Aggregate scores for one run.
///
/// Fractions are `count / total`, each divided once, so the four category
/// fractions (and the four quadrant fractions) sum to one up to a few ulps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_questions: u64,
    pub n_failed: u64,
    pub n_paths_per_question: u64,
    pub n_paths: u64,
    pub em: f64,
    pub f1: f64,
    pub em_count: u64,
    pub category_counts: BTreeMap<ErrorCategory, u64>,
    pub category_fractions: BTreeMap<ErrorCategory, f64>,
    pub quadrant_counts: BTreeMap<PathQuadrant, u64>,
    pub quadrant_fractions: BTreeMap<PathQuadrant, f64>,
}

fn fractions<K: Ord + Copy>(counts: &BTreeMap<K, u64>, total: u64) -> BTreeMap<K, f64> {
    counts
        .iter()
        .map(|(&k, &c)| (k, if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect()
}

pub fn aggregate_report(
    records: &[RunRecord],
    questions: &[QuestionRecord],
    profile: &NormProfile,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let by_id: BTreeMap<&str, &QuestionRecord> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut category_counts: BTreeMap<ErrorCategory, u64> = ErrorCategory::ALL.iter().map(|&c| (c, 0)).collect();
    let mut quadrant_counts: BTreeMap<PathQuadrant, u64> = PathQuadrant::ALL.iter().map(|&q| (q, 0)).collect();
    let mut em_count = 0u64;
    let mut f1_sum = 0.0f64;
    let mut n_failed = 0u64;
    let mut n_paths = 0u64;
    let mut k_max = 0u64;

    for r in records {
        let q = by_id
            .get(r.question_id.as_str())
            .ok_or_else(|| EvalError::UnknownQuestion(r.question_id.clone()))?;
        let steps = profile.steps_for(q.dataset);
        if r.is_failed() {
            n_failed += 1;
        }
        if exact_match(&r.voted_answer, &q.gold_answers, steps) {
            em_count += 1;
        }
        f1_sum += token_f1(&r.voted_answer, &q.gold_answers, steps);
        *category_counts
            .get_mut(&classify_question(&q.gold_answers, &r.paths, &r.voted_answer, steps))
            .expect("all categories seeded") += 1;
        for p in &r.paths {
            *quadrant_counts
                .get_mut(&per_path_quadrant(&q.gold_answers, p, steps))
                .expect("all quadrants seeded") += 1;
        }
        n_paths += r.paths.len() as u64;
        k_max = k_max.max(r.paths.len() as u64);
    }

    let n = records.len() as u64;
    Ok(EvalReport {
        n_questions: n,
        n_failed,
        n_paths_per_question: k_max,
        n_paths,
        em: em_count as f64 / n as f64,
        f1: f1_sum / n as f64,
        em_count,
        category_fractions: fractions(&category_counts, n),
        category_counts,
        quadrant_fractions: fractions(&quadrant_counts, n_paths),
        quadrant_counts,
    })
}

fn pct(x: f64) -> String {
    alloc::format!("{:.2}%", 100.0 * x)
}

impl EvalReport {
    /// Per-question error categories, one row per category.
    pub fn category_table(&self) -> String {
        let k = self.n_paths_per_question as usize;
        let mut out = String::new();
        let _ = writeln!(out, "{:<18}{:>10}{:>10}", "Category", "Fraction", "Count");
        for c in ErrorCategory::ALL {
            let _ = writeln!(
                out,
                "{:<18}{:>10}{:>10}",
                c.label(k),
                pct(self.category_fractions[&c]),
                self.category_counts[&c]
            );
        }
        out
    }

    /// Per-path quadrants: recitation contains the answer × answer correct.
    pub fn quadrant_table(&self) -> String {
        let mark = |b: bool| if b { "yes" } else { "no" };
        let mut out = String::new();
        let _ = writeln!(out, "{:<8}{:<8}{:>10}{:>10}", "Recit.", "Ans.", "Fraction", "Count");
        for q in PathQuadrant::ALL {
            let _ = writeln!(
                out,
                "{:<8}{:<8}{:>10}{:>10}",
                mark(q.recited()),
                mark(q.correct()),
                pct(self.quadrant_fractions[&q]),
                self.quadrant_counts[&q]
            );
        }
        out
    }

    pub fn summary_line(&self) -> String {
        alloc::format!(
            "EM {:.2} / F1 {:.2} over {} questions ({} failed)",
            100.0 * self.em,
            100.0 * self.f1,
            self.n_questions,
            self.n_failed
        )
    }

    pub fn category_rows(&self) -> Vec<(ErrorCategory, u64, f64)> {
        ErrorCategory::ALL
            .iter()
            .map(|c| (*c, self.category_counts[c], self.category_fractions[c]))
            .collect()
    }
}
