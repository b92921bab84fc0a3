use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::normalize::{normalize, NormSteps};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteGroup {
    pub normalized: String,
    /// First raw answer seen for this group.
    pub representative: String,
    pub count: usize,
    pub first_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    /// Raw text of the winning group's first member.
    pub winner: String,
    pub winner_normalized: String,
    /// Groups in order of first occurrence.
    pub groups: Vec<VoteGroup>,
}

impl Vote {
    pub fn winner_count(&self) -> usize {
        self.groups.iter().find(|g| g.normalized == self.winner_normalized).map_or(0, |g| g.count)
    }
}

/// Plurality over normalized answers. Ties go to the group whose first member
/// appears earliest. `None` for an empty list.
pub fn plurality_vote<S: AsRef<str>>(answers: &[S], steps: &NormSteps) -> Option<Vote> {
    let mut groups: Vec<VoteGroup> = Vec::new();
    for (i, a) in answers.iter().enumerate() {
        let raw = a.as_ref();
        let norm = normalize(raw, steps);
        match groups.iter_mut().find(|g| g.normalized == norm) {
            Some(g) => g.count += 1,
            None => groups.push(VoteGroup {
                normalized: norm,
                representative: String::from(raw),
                count: 1,
                first_index: i,
            }),
        }
    }
    let mut best: Option<&VoteGroup> = None;
    for g in &groups {
        if best.is_none_or(|b| g.count > b.count) {
            best = Some(g);
        }
    }
    let best = best?;
    Some(Vote {
        winner: best.representative.clone(),
        winner_normalized: best.normalized.clone(),
        groups: groups.clone(),
    })
}
