use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::normalize::{exact_match, normalize, NormSteps};
use crate::model::RecitationPath;

/// Per-question outcome. Checked in declaration order; the first that holds wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    /// The voted answer is correct.
    HitsAtMajority,
    /// Some path answered correctly but lost the vote.
    HitsAt20Path,
    /// No path answered correctly, but some recitation contains a gold answer.
    HitsAt20Recit,
    /// No recitation contains a gold answer.
    NotRecit,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::HitsAtMajority,
        ErrorCategory::NotRecit,
        ErrorCategory::HitsAt20Recit,
        ErrorCategory::HitsAt20Path,
    ];

    /// Row label; `k` is the number of paths per question.
    pub fn label(self, k: usize) -> String {
        match self {
            ErrorCategory::HitsAtMajority => "Hits@Majority".into(),
            ErrorCategory::HitsAt20Path => alloc::format!("Hits@{k}-Path"),
            ErrorCategory::HitsAt20Recit => alloc::format!("Hits@{k}-Recit."),
            ErrorCategory::NotRecit => "Not Recit.".into(),
        }
    }
}

/// (recitation contains a gold answer) × (path answer is correct).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PathQuadrant {
    RecitedCorrect,
    RecitedWrong,
    UnrecitedCorrect,
    UnrecitedWrong,
}

impl PathQuadrant {
    pub const ALL: [PathQuadrant; 4] = [
        PathQuadrant::RecitedCorrect,
        PathQuadrant::RecitedWrong,
        PathQuadrant::UnrecitedCorrect,
        PathQuadrant::UnrecitedWrong,
    ];

    pub fn from_axes(recited: bool, correct: bool) -> Self {
        match (recited, correct) {
            (true, true) => PathQuadrant::RecitedCorrect,
            (true, false) => PathQuadrant::RecitedWrong,
            (false, true) => PathQuadrant::UnrecitedCorrect,
            (false, false) => PathQuadrant::UnrecitedWrong,
        }
    }

    pub fn recited(self) -> bool {
        matches!(self, PathQuadrant::RecitedCorrect | PathQuadrant::RecitedWrong)
    }

    pub fn correct(self) -> bool {
        matches!(self, PathQuadrant::RecitedCorrect | PathQuadrant::UnrecitedCorrect)
    }
}

fn normalized_golds<S: AsRef<str>>(golds: &[S], steps: &NormSteps) -> Vec<String> {
    golds.iter().map(|g| normalize(g.as_ref(), steps)).collect()
}

fn contains_any(haystacks: &[String], normalized_golds: &[String], steps: &NormSteps) -> bool {
    haystacks.iter().any(|r| {
        let r = normalize(r, steps);
        // An empty gold would be a substring of everything.
        normalized_golds.iter().any(|g| !g.is_empty() && r.contains(g.as_str()))
    })
}

/// Whether any normalized gold occurs as a substring of any normalized recitation.
pub fn recitation_contains_gold<S: AsRef<str>>(golds: &[S], recitations: &[String], steps: &NormSteps) -> bool {
    contains_any(recitations, &normalized_golds(golds, steps), steps)
}

/// Per-question error analysis.
///
/// Only voting paths contribute answer predictions; recitations from every
/// path are searched for the gold answers.
pub fn classify_question<S: AsRef<str>>(
    golds: &[S],
    paths: &[RecitationPath],
    voted: &str,
    steps: &NormSteps,
) -> ErrorCategory {
    let gold = normalized_golds(golds, steps);
    let hit = |text: &str| {
        let n = normalize(text, steps);
        gold.contains(&n)
    };
    if hit(voted) {
        return ErrorCategory::HitsAtMajority;
    }
    if paths.iter().filter(|p| p.votes()).any(|p| hit(&p.extracted_answer)) {
        return ErrorCategory::HitsAt20Path;
    }
    if paths.iter().any(|p| contains_any(&p.recitations, &gold, steps)) {
        return ErrorCategory::HitsAt20Recit;
    }
    ErrorCategory::NotRecit
}

/// Quadrant of one path. A path that does not vote never counts as correct.
pub fn per_path_quadrant<S: AsRef<str>>(golds: &[S], path: &RecitationPath, steps: &NormSteps) -> PathQuadrant {
    let recited = recitation_contains_gold(golds, &path.recitations, steps);
    let correct = path.votes() && exact_match(&path.extracted_answer, golds, steps);
    PathQuadrant::from_axes(recited, correct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PathStatus;
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn path(recitation: &str, answer: &str) -> RecitationPath {
        RecitationPath {
            recitations: vec![recitation.into()],
            raw_answer_text: alloc::format!("Answer: {answer}"),
            extracted_answer: answer.into(),
            backend_meta: BTreeMap::new(),
            status: PathStatus::Ok,
            error: None,
        }
    }

    #[test]
    fn majority_hit() {
        let paths = [path("x", "paris"), path("x", "paris"), path("x", "rome")];
        assert_eq!(classify_question(&["paris"], &paths, "paris", &NormSteps::default()), ErrorCategory::HitsAtMajority);
    }

    #[test]
    fn path_hit() {
        // hand trace: voted "rome" misses; path 3 answers "paris" ∈ golds
        let paths = [path("x", "rome"), path("x", "rome"), path("x", "paris")];
        assert_eq!(classify_question(&["paris"], &paths, "rome", &NormSteps::default()), ErrorCategory::HitsAt20Path);
    }

    #[test]
    fn recit_hit() {
        // hand trace: no answer matches; "paris" ⊂ "paris is the capital of france"
        let paths = [path("Paris is the capital of France", "rome"), path("Rome.", "rome")];
        assert_eq!(classify_question(&["paris"], &paths, "rome", &NormSteps::default()), ErrorCategory::HitsAt20Recit);
    }

    #[test]
    fn not_recit() {
        let paths = [path("Rome.", "rome")];
        assert_eq!(classify_question(&["paris"], &paths, "rome", &NormSteps::default()), ErrorCategory::NotRecit);
    }

    #[test]
    fn failed_paths_do_not_count_as_answers() {
        let mut p = path("nothing", "paris");
        p.status = PathStatus::ExtractionFailed;
        assert_eq!(classify_question(&["paris"], &[p.clone()], "", &NormSteps::default()), ErrorCategory::NotRecit);
        assert_eq!(per_path_quadrant(&["paris"], &p, &NormSteps::default()), PathQuadrant::UnrecitedWrong);
    }

    #[test]
    fn quadrants() {
        let s = NormSteps::default();
        assert_eq!(per_path_quadrant(&["paris"], &path("Paris, France", "Paris"), &s), PathQuadrant::RecitedCorrect);
        assert_eq!(per_path_quadrant(&["paris"], &path("Lyon", "paris"), &s), PathQuadrant::UnrecitedCorrect);
        assert_eq!(per_path_quadrant(&["paris"], &path("Lyon", "lyon"), &s), PathQuadrant::UnrecitedWrong);
        assert_eq!(per_path_quadrant(&["paris"], &path("Paris", "lyon"), &s), PathQuadrant::RecitedWrong);
    }

    #[test]
    fn empty_gold_never_substring() {
        assert!(!recitation_contains_gold(&["the"], &["anything".into()], &NormSteps::default()));
    }
}
