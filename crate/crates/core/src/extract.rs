//! Pulling answers and recitations out of raw model output.
//!
//! Prompts end in a cue (`Answer:`, `Recitation:`, `Recitation 1:`), so the
//! orchestrator prepends that cue to the model's continuation before calling
//! into this module. Extraction is then a pure function of the stored raw text.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::model::Scheme;
use crate::prompting::{ANSWER_CUE, COT_ANSWER_ANCHOR, INTRA_SEPARATOR};

/// Result of answer extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub answer: String,
    /// No cue found, or nothing after it.
    pub failed: bool,
}

/// Extract with the default block separator (`"\n\n"`).
pub fn extract_answer(raw: &str, scheme: Scheme) -> Extraction {
    extract_answer_with(raw, scheme, INTRA_SEPARATOR)
}

/// Extract the final answer.
///
/// Chain-of-thought output is read after the last `So the answer is` with a
/// trailing period stripped; every other scheme reads after the last
/// `Answer:`. In both cases text stops at the first `block_separator`.
pub fn extract_answer_with(raw: &str, scheme: Scheme, block_separator: &str) -> Extraction {
    let anchor = match scheme {
        Scheme::ChainOfThought => COT_ANSWER_ANCHOR,
        _ => ANSWER_CUE,
    };
    let Some(pos) = raw.rfind(anchor) else {
        return Extraction { answer: String::new(), failed: true };
    };
    let mut answer = cut_block(&raw[pos + anchor.len()..], block_separator).trim();
    if scheme == Scheme::ChainOfThought {
        answer = answer.strip_suffix('.').unwrap_or(answer).trim_end();
    }
    Extraction { answer: answer.to_string(), failed: answer.is_empty() }
}

/// Text up to the first block separator.
pub fn cut_block<'a>(text: &'a str, block_separator: &str) -> &'a str {
    if block_separator.is_empty() {
        return text;
    }
    match text.find(block_separator) {
        Some(i) => &text[..i],
        None => text,
    }
}

/// Clean a single generated passage or hint: cut at the block separator, trim.
pub fn clean_generation(text: &str, block_separator: &str) -> String {
    cut_block(text, block_separator).trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureError {
    pub missing_cue: String,
}

impl core::fmt::Display for StructureError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "output lacks cue {:?}", self.missing_cue)
    }
}

/// Split a one-pass multi-hop output on `Recitation 1:` .. `Recitation n:`.
///
/// `raw` must include the leading `Recitation 1:` cue. Each recitation ends at
/// the next cue or the first block separator, whichever comes first. An empty
/// recitation counts as a missing cue.
pub fn split_recitations(
    raw: &str,
    n: usize,
    block_separator: &str,
) -> Result<Vec<String>, StructureError> {
    let cues: Vec<String> = (1..=n).map(|i| format!("Recitation {i}:")).collect();
    let mut starts = Vec::with_capacity(n);
    let mut from = 0usize;
    for cue in &cues {
        match raw[from..].find(cue.as_str()) {
            Some(off) => {
                let at = from + off;
                starts.push((at, at + cue.len()));
                from = at + cue.len();
            }
            None => return Err(StructureError { missing_cue: cue.clone() }),
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let body_start = starts[i].1;
        let body_end = if i + 1 < n { starts[i + 1].0 } else { raw.len() };
        let text = clean_generation(&raw[body_start..body_end], block_separator);
        if text.is_empty() {
            return Err(StructureError { missing_cue: cues[i].clone() });
        }
        out.push(text);
    }
    Ok(out)
}
