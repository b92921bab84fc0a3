use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::Dataset;

/// Which normalization steps run. They always run in the order
/// lowercase → strip punctuation → strip articles → collapse whitespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormSteps {
    pub lowercase: bool,
    pub strip_punct: bool,
    pub strip_articles: bool,
    pub collapse_whitespace: bool,
}

impl Default for NormSteps {
    fn default() -> Self {
        NormSteps { lowercase: true, strip_punct: true, strip_articles: true, collapse_whitespace: true }
    }
}

/// Default steps plus per-dataset overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormProfile {
    #[serde(flatten)]
    pub steps: NormSteps,
    #[serde(default)]
    pub overrides: BTreeMap<Dataset, NormSteps>,
}

impl NormProfile {
    pub fn steps_for(&self, dataset: Dataset) -> &NormSteps {
        self.overrides.get(&dataset).unwrap_or(&self.steps)
    }
}

fn is_article(word: &str) -> bool {
    matches!(word, "a" | "an" | "the")
}

pub fn normalize(text: &str, steps: &NormSteps) -> String {
    let mut s: String = if steps.lowercase { text.to_lowercase() } else { String::from(text) };
    if steps.strip_punct {
        s.retain(|c| !c.is_ascii_punctuation());
    }
    if steps.strip_articles {
        // whitespace-delimited articles become a single space
        let mut out = String::with_capacity(s.len());
        let mut rest = s.as_str();
        while !rest.is_empty() {
            let ws = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
            out.push_str(&rest[..ws]);
            rest = &rest[ws..];
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let word = &rest[..end];
            if is_article(word) {
                out.push(' ');
            } else {
                out.push_str(word);
            }
            rest = &rest[end..];
        }
        s = out;
    }
    if steps.collapse_whitespace {
        s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    s
}

/// True iff the normalized prediction equals any normalized gold alias.
pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S], steps: &NormSteps) -> bool {
    let p = normalize(pred, steps);
    golds.iter().any(|g| normalize(g.as_ref(), steps) == p)
}

fn f1_single(pred_tokens: &[&str], gold: &str) -> f64 {
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
    match (pred_tokens.is_empty(), gold_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &gold_tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0u64;
    for t in pred_tokens {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    // 2PR/(P+R) with P = c/|p|, R = c/|g| simplifies to 2c/(|p|+|g|)
    (2 * common) as f64 / (pred_tokens.len() + gold_tokens.len()) as f64
}

/// Token-multiset F1, maximized over gold aliases.
pub fn token_f1<S: AsRef<str>>(pred: &str, golds: &[S], steps: &NormSteps) -> f64 {
    let p = normalize(pred, steps);
    let pred_tokens: Vec<&str> = p.split_whitespace().collect();
    golds
        .iter()
        .map(|g| f1_single(&pred_tokens, &normalize(g.as_ref(), steps)))
        .fold(0.0, f64::max)
}
