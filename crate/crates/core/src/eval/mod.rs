//! Scoring and analysis: normalization, EM/F1, plurality voting, per-question
//! error categories, per-path quadrants, report aggregation, and the
//! path-count subsampling curve.

mod analysis;
mod normalize;
mod report;
mod subsample;
mod vote;

pub use analysis::{classify_question, per_path_quadrant, recitation_contains_gold, ErrorCategory, PathQuadrant};
pub use normalize::{exact_match, normalize, token_f1, NormProfile, NormSteps};
pub use report::{aggregate_report, EvalError, EvalReport};
pub use subsample::{mean_std, path_subsample_curve, CurvePoint};
pub use vote::{plurality_vote, Vote, VoteGroup};
