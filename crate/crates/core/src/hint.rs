//! Passage hints: `<page> --- <section> --- ... --- Paragraph #<n>`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub const HINT_DELIMITER: &str = " --- ";
const PARAGRAPH_PREFIX: &str = "Paragraph #";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HintError {
    #[error("page title is empty")]
    EmptyTitle,
    #[error("paragraph index must be >= 1")]
    ZeroIndex,
    #[error("empty section title at depth {depth}")]
    EmptyComponent { depth: usize },
    #[error("component {component:?} contains the hint delimiter")]
    DelimiterInComponent { component: String },
    #[error("hint grammar violated at byte {position}: {reason}")]
    Grammar { position: usize, reason: &'static str },
}

/// A corpus paragraph together with its canonical hint.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HintedPassage {
    pub page_title: String,
    pub section_path: Vec<String>,
    /// 1-based position within its section.
    pub para_index: u32,
    pub text: String,
    pub hint: String,
}

impl HintedPassage {
    pub fn new(
        page_title: impl Into<String>,
        section_path: Vec<String>,
        para_index: u32,
        text: impl Into<String>,
    ) -> Result<Self, HintError> {
        let page_title = page_title.into();
        let hint = make_hint(&page_title, &section_path, para_index)?;
        Ok(HintedPassage { page_title, section_path, para_index, text: text.into(), hint })
    }

    /// Whether `hint` is exactly the hint derived from the other fields.
    pub fn hint_is_consistent(&self) -> bool {
        make_hint(&self.page_title, &self.section_path, self.para_index).as_deref() == Ok(self.hint.as_str())
    }
}

/// Canonical form used to deduplicate sampled hints: trimmed, internal
/// whitespace collapsed, lowercased.
pub fn hint_dedup_key(hint: &str) -> String {
    hint.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Drop hints whose dedup key was already seen, keeping first occurrences.
pub fn dedup_hints<S: AsRef<str>>(hints: &[S]) -> Vec<String> {
    let mut seen = alloc::collections::BTreeSet::new();
    hints
        .iter()
        .filter(|h| seen.insert(hint_dedup_key(h.as_ref())))
        .map(|h| h.as_ref().to_string())
        .collect()
}

/// Components of a parsed hint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintParts {
    pub page_title: String,
    pub section_path: Vec<String>,
    pub para_index: u32,
}

fn check_component(c: &str, depth: usize) -> Result<(), HintError> {
    if c.is_empty() {
        return Err(if depth == 0 { HintError::EmptyTitle } else { HintError::EmptyComponent { depth } });
    }
    // A trailing " ---" would fuse with the delimiter's leading space and
    // shift the split point, so it is rejected along with the delimiter itself.
    if c.contains(HINT_DELIMITER) || c.ends_with(" ---") {
        return Err(HintError::DelimiterInComponent { component: c.to_string() });
    }
    Ok(())
}

/// Build the canonical hint for a paragraph. `para_index` is 1-based.
pub fn make_hint<S: AsRef<str>>(
    page_title: &str,
    section_path: &[S],
    para_index: u32,
) -> Result<String, HintError> {
    check_component(page_title, 0)?;
    for (i, s) in section_path.iter().enumerate() {
        check_component(s.as_ref(), i + 1)?;
    }
    if para_index == 0 {
        return Err(HintError::ZeroIndex);
    }
    let mut out = String::from(page_title);
    for s in section_path {
        out.push_str(HINT_DELIMITER);
        out.push_str(s.as_ref());
    }
    out.push_str(HINT_DELIMITER);
    out.push_str(PARAGRAPH_PREFIX);
    out.push_str(&para_index.to_string());
    Ok(out)
}

/// Inverse of [`make_hint`].
pub fn parse_hint(hint: &str) -> Result<HintParts, HintError> {
    let mut pieces: Vec<(usize, &str)> = Vec::new();
    let mut start = 0usize;
    while let Some(off) = hint[start..].find(HINT_DELIMITER) {
        pieces.push((start, &hint[start..start + off]));
        start += off + HINT_DELIMITER.len();
    }
    pieces.push((start, &hint[start..]));

    if pieces.len() < 2 {
        return Err(HintError::Grammar {
            position: hint.len(),
            reason: "expected \" --- Paragraph #<n>\" tail",
        });
    }
    let (tail_at, tail) = pieces.pop().expect("len >= 2");
    let digits = tail.strip_prefix(PARAGRAPH_PREFIX).ok_or(HintError::Grammar {
        position: tail_at,
        reason: "expected \"Paragraph #\"",
    })?;
    let digits_at = tail_at + PARAGRAPH_PREFIX.len();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(HintError::Grammar { position: digits_at, reason: "expected paragraph number" });
    }
    if digits.starts_with('0') {
        return Err(HintError::Grammar {
            position: digits_at,
            reason: "paragraph number must be positive without leading zeros",
        });
    }
    let para_index: u32 = digits
        .parse()
        .map_err(|_| HintError::Grammar { position: digits_at, reason: "paragraph number overflows" })?;

    for (at, p) in &pieces {
        if p.is_empty() {
            return Err(HintError::Grammar { position: *at, reason: "empty component" });
        }
    }
    let mut iter = pieces.into_iter().map(|(_, p)| p.to_string());
    let page_title = iter.next().expect("len >= 1");
    Ok(HintParts { page_title, section_path: iter.collect(), para_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const CHILD_SUPPORT: &str =
        "Child support --- Compliance and enforcement issues --- Enforcement --- Paragraph #2";

    #[test]
    fn child_support_example() {
        let h = make_hint("Child support", &["Compliance and enforcement issues", "Enforcement"], 2).unwrap();
        assert_eq!(h, CHILD_SUPPORT);
        let p = parse_hint(CHILD_SUPPORT).unwrap();
        assert_eq!(p.page_title, "Child support");
        assert_eq!(p.section_path, vec!["Compliance and enforcement issues", "Enforcement"]);
        assert_eq!(p.para_index, 2);
    }

    #[test]
    fn lead_section() {
        assert_eq!(make_hint::<&str>("X", &[], 1).unwrap(), "X --- Paragraph #1");
        let p = parse_hint("A --- Paragraph #3").unwrap();
        assert_eq!(p, HintParts { page_title: "A".into(), section_path: vec![], para_index: 3 });
    }

    #[test]
    fn delimiter_injection() {
        assert!(matches!(
            make_hint("A --- B", &["c"], 1),
            Err(HintError::DelimiterInComponent { .. })
        ));
        assert!(matches!(make_hint("A ---", &["c"], 1), Err(HintError::DelimiterInComponent { .. })));
    }

    #[test]
    fn dedup() {
        let h = ["A --- Paragraph #1", "a  ---  paragraph #1 ", "B --- Paragraph #2"];
        let once = dedup_hints(&h);
        assert_eq!(once, vec!["A --- Paragraph #1", "B --- Paragraph #2"]);
        assert_eq!(dedup_hints(&once), once);
    }

    #[test]
    fn passage_hint_consistency() {
        let mut p = HintedPassage::new("T", vec!["S".into()], 3, "text").unwrap();
        assert_eq!(p.hint, "T --- S --- Paragraph #3");
        assert!(p.hint_is_consistent());
        p.para_index = 4;
        assert!(!p.hint_is_consistent());
    }

    #[test]
    fn bad_inputs() {
        assert_eq!(make_hint::<&str>("", &[], 1), Err(HintError::EmptyTitle));
        assert_eq!(make_hint::<&str>("A", &[], 0), Err(HintError::ZeroIndex));
        assert!(matches!(parse_hint("A --- B"), Err(HintError::Grammar { position: 6, .. })));
        assert!(matches!(parse_hint("A"), Err(HintError::Grammar { .. })));
        assert!(matches!(parse_hint("A --- Paragraph #"), Err(HintError::Grammar { position: 17, .. })));
        assert!(matches!(parse_hint("A --- Paragraph #0"), Err(HintError::Grammar { .. })));
        assert!(matches!(parse_hint(" --- Paragraph #1"), Err(HintError::Grammar { position: 0, .. })));
    }
}
