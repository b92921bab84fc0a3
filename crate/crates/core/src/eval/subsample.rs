use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalize::{exact_match, token_f1, NormProfile};
use super::report::EvalError;
use super::vote::plurality_vote;
use crate::math;
use crate::model::{QuestionRecord, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub paths: usize,
    pub em_mean: f64,
    pub em_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    /// (EM, F1) of each trial.
    pub trials: Vec<(f64, f64)>,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var))
}

/// Re-vote on random path subsets.
///
/// For each count `c` and trial, every question keeps `c` of its stored paths
/// (uniformly, without replacement, then in canonical path order) and is
/// re-voted and re-scored. Means and sample standard deviations are over trials.
pub fn path_subsample_curve(
    records: &[RunRecord],
    questions: &[QuestionRecord],
    path_counts: &[usize],
    trials: usize,
    seed: u64,
    profile: &NormProfile,
) -> Result<Vec<CurvePoint>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    if trials == 0 {
        return Err(EvalError::ZeroTrials);
    }
    let by_id: BTreeMap<&str, &QuestionRecord> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut resolved = Vec::with_capacity(records.len());
    for r in records {
        let q = by_id
            .get(r.question_id.as_str())
            .ok_or_else(|| EvalError::UnknownQuestion(r.question_id.clone()))?;
        resolved.push((r, *q));
    }
    for &c in path_counts {
        if c == 0 {
            return Err(EvalError::ZeroPathCount);
        }
        if let Some((r, _)) = resolved.iter().find(|(r, _)| r.paths.len() < c) {
            return Err(EvalError::PathCountTooLarge {
                count: c,
                available: r.paths.len(),
                question_id: r.question_id.clone(),
            });
        }
    }

    let n = records.len() as f64;
    let mut out = Vec::with_capacity(path_counts.len());
    for &c in path_counts {
        let mut per_trial = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((c as u64) << 32) | t as u64);
            let (mut em, mut f1) = (0u64, 0.0f64);
            for (r, q) in &resolved {
                let steps = profile.steps_for(q.dataset);
                let mut picked = index::sample(&mut rng, r.paths.len(), c).into_vec();
                picked.sort_unstable();
                let answers: Vec<&str> = picked
                    .iter()
                    .map(|&i| &r.paths[i])
                    .filter(|p| p.votes())
                    .map(|p| p.extracted_answer.as_str())
                    .collect();
                let voted = plurality_vote(&answers, steps).map(|v| v.winner).unwrap_or_default();
                if exact_match(&voted, &q.gold_answers, steps) {
                    em += 1;
                }
                f1 += token_f1(&voted, &q.gold_answers, steps);
            }
            per_trial.push((em as f64 / n, f1 / n));
        }
        let ems: Vec<f64> = per_trial.iter().map(|t| t.0).collect();
        let f1s: Vec<f64> = per_trial.iter().map(|t| t.1).collect();
        let (em_mean, em_std) = mean_std(&ems);
        let (f1_mean, f1_std) = mean_std(&f1s);
        out.push(CurvePoint { paths: c, em_mean, em_std, f1_mean, f1_std, trials: per_trial });
    }
    Ok(out)
}
