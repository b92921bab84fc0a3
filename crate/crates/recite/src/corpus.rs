//! Passage-hint corpora: ingestion, persistence, and synthetic question export.
//!
//! The native dump format is one JSON page per line:
//!
//! ```json
//! {"title": "Child support", "lead": "para\n\npara",
//!  "sections": [{"title": "Enforcement", "text": "para", "sections": []}]}
//! ```
//!
//! Paragraphs are blank-line separated blocks with whitespace collapsed.
//! [`parse_wikitext`] converts the heading-marked plain text of the
//! WikiText-103 distribution into the same page structure.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use recite_core::extract::clean_generation;
use recite_core::hint::{HintError, HintedPassage};
use recite_core::prompting::{build_question_generation_prompt, sample_exemplars, PromptDialect, QgenExemplar};
use recite_core::SamplingParams;
use serde::{Deserialize, Serialize};

use crate::backend::{generate_batch, Backend, GenerationRequest};
use crate::jsonl::{self, JsonlError};

/// Number of (evidence, question) demonstrations for question generation.
pub const QGEN_SHOTS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("{path}:{line}: {source}")]
    Hint { path: String, line: usize, source: HintError },
    #[error("duplicate passage {hint:?} (line {line}, first seen on line {first_line})")]
    Duplicate { hint: String, line: usize, first_line: usize },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("question generation needs exactly {QGEN_SHOTS} exemplars, got {0}")]
    QgenShots(usize),
    #[error("cannot sample {requested} passages from a corpus of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("corpus index is inconsistent: {0}")]
    Index(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DumpSection {
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub sections: Vec<DumpSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DumpPage {
    pub title: String,
    #[serde(default)]
    pub lead: String,
    #[serde(default)]
    pub sections: Vec<DumpSection>,
}

/// Blank-line separated blocks, whitespace collapsed, empties dropped.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                let para = cur.join(" ").split_whitespace().collect::<Vec<_>>().join(" ");
                if !para.is_empty() {
                    out.push(para);
                }
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    out
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One passage per paragraph, numbered from 1 within each section. Nested
/// sections carry every ancestor title in their path.
pub fn page_passages(page: &DumpPage) -> Result<Vec<HintedPassage>, HintError> {
    fn walk(
        title: &str,
        path: &mut Vec<String>,
        text: &str,
        sections: &[DumpSection],
        out: &mut Vec<HintedPassage>,
    ) -> Result<(), HintError> {
        for (i, para) in split_paragraphs(text).into_iter().enumerate() {
            out.push(HintedPassage::new(title, path.clone(), i as u32 + 1, para)?);
        }
        for s in sections {
            path.push(collapse(&s.title));
            walk(title, path, &s.text, &s.sections, out)?;
            path.pop();
        }
        Ok(())
    }
    let title = collapse(&page.title);
    let mut out = Vec::new();
    walk(&title, &mut Vec::new(), &page.lead, &page.sections, &mut out)?;
    Ok(out)
}

/// Heading level of a WikiText line (` = T = ` is 0, ` = = S = = ` is 1), with
/// the heading text.
fn wikitext_heading(line: &str) -> Option<(usize, String)> {
    let t = line.trim();
    if !(t.starts_with('=') && t.ends_with('=')) || t.len() < 3 {
        return None;
    }
    let tokens: Vec<&str> = t.split(' ').filter(|s| !s.is_empty()).collect();
    let lead = tokens.iter().take_while(|s| **s == "=").count();
    let trail = tokens.iter().rev().take_while(|s| **s == "=").count();
    if lead == 0 || lead != trail || lead * 2 >= tokens.len() {
        return None;
    }
    Some((lead - 1, tokens[lead..tokens.len() - trail].join(" ")))
}

/// Convert WikiText-103 style text into pages tagged with the line of their
/// title heading. Every non-heading line is a paragraph.
pub fn parse_wikitext<R: BufRead>(reader: R, source: &str) -> Result<Vec<(usize, DumpPage)>, CorpusError> {
    let mut pages: Vec<(usize, DumpPage)> = Vec::new();
    // stack of open sections for the current page, by depth
    let mut stack: Vec<DumpSection> = Vec::new();

    fn close_to(stack: &mut Vec<DumpSection>, depth: usize, page: &mut DumpPage) {
        while stack.len() > depth {
            let s = stack.pop().expect("len > depth");
            match stack.last_mut() {
                Some(parent) => parent.sections.push(s),
                None => page.sections.push(s),
            }
        }
    }

    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io { path: PathBuf::from(source), source: e })?;
        let lineno = i + 1;
        if let Some((level, text)) = wikitext_heading(&line) {
            if level == 0 {
                if let Some((_, page)) = pages.last_mut() {
                    close_to(&mut stack, 0, page);
                }
                pages.push((lineno, DumpPage { title: text, ..Default::default() }));
                continue;
            }
            let Some((_, page)) = pages.last_mut() else {
                return Err(CorpusError::Record {
                    path: source.into(),
                    line: lineno,
                    message: "section heading before any page title".into(),
                });
            };
            if level > stack.len() + 1 {
                return Err(CorpusError::Record {
                    path: source.into(),
                    line: lineno,
                    message: format!("heading level {level} skips a level (open depth {})", stack.len()),
                });
            }
            close_to(&mut stack, level - 1, page);
            stack.push(DumpSection { title: text, ..Default::default() });
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some((_, page)) = pages.last_mut() else {
            return Err(CorpusError::Record { path: source.into(), line: lineno, message: "text before any page title".into() });
        };
        let target = match stack.last_mut() {
            Some(s) => &mut s.text,
            None => &mut page.lead,
        };
        if !target.is_empty() {
            target.push_str("\n\n");
        }
        target.push_str(line.trim());
    }
    if let Some((_, page)) = pages.last_mut() {
        close_to(&mut stack, 0, page);
    }
    Ok(pages)
}

/// Read the native JSONL dump. Errors carry the line number.
pub fn read_dump(path: &Path) -> Result<Vec<(usize, DumpPage)>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let page: DumpPage = serde_json::from_str(&line).map_err(|e| CorpusError::Record {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if page.title.trim().is_empty() {
            return Err(CorpusError::Record { path: path.display().to_string(), line: i + 1, message: "empty page title".into() });
        }
        out.push((i + 1, page));
    }
    Ok(out)
}

/// Immutable passage store with hint lookup and seeded sampling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStore {
    passages: Vec<HintedPassage>,
    by_hint: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexLine {
    hint: String,
    /// Byte offset of the passage line in `passages.jsonl`.
    offset: u64,
}

impl CorpusStore {
    /// Build from pages tagged with their source line; duplicate hints are a
    /// hard error naming both lines.
    pub fn build<I>(pages: I, source: &str) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (usize, DumpPage)>,
    {
        let mut store = CorpusStore::default();
        let mut first_line: HashMap<String, usize> = HashMap::new();
        for (line, page) in pages {
            let passages =
                page_passages(&page).map_err(|source_err| CorpusError::Hint { path: source.into(), line, source: source_err })?;
            for p in passages {
                if let Some(&first) = first_line.get(&p.hint) {
                    return Err(CorpusError::Duplicate { hint: p.hint, line, first_line: first });
                }
                first_line.insert(p.hint.clone(), line);
                store.by_hint.insert(p.hint.clone(), store.passages.len());
                store.passages.push(p);
            }
        }
        Ok(store)
    }

    pub fn from_passages(passages: Vec<HintedPassage>) -> Result<Self, CorpusError> {
        let mut by_hint = HashMap::new();
        for (i, p) in passages.iter().enumerate() {
            if !p.hint_is_consistent() {
                return Err(CorpusError::Index(format!("passage {i} hint {:?} does not match its fields", p.hint)));
            }
            if let Some(first) = by_hint.insert(p.hint.clone(), i) {
                return Err(CorpusError::Duplicate { hint: p.hint.clone(), line: i + 1, first_line: first + 1 });
            }
        }
        Ok(CorpusStore { passages, by_hint })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[HintedPassage] {
        &self.passages
    }

    pub fn get(&self, id: usize) -> Option<&HintedPassage> {
        self.passages.get(id)
    }

    pub fn by_hint(&self, hint: &str) -> Option<&HintedPassage> {
        self.by_hint.get(hint).map(|&i| &self.passages[i])
    }

    /// `n` distinct passages, uniformly and deterministically in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<&HintedPassage>, CorpusError> {
        if n > self.len() {
            return Err(CorpusError::SampleTooLarge { requested: n, available: self.len() });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let idx: Vec<usize> = (0..self.len()).collect();
        let picked = sample_exemplars(&idx, n, seed).expect("bounds checked");
        Ok(picked.into_iter().map(|i| &self.passages[i]).collect())
    }

    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io { path: dir.into(), source })?;
        let mut index = Vec::with_capacity(self.len());
        let mut offset = 0u64;
        for p in &self.passages {
            index.push(IndexLine { hint: p.hint.clone(), offset });
            offset += jsonl::to_line(p)?.len() as u64 + 1;
        }
        jsonl::write_all(&passages_path(dir), self.passages.iter())?;
        jsonl::write_all(&index_path(dir), index.iter())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let passages: Vec<HintedPassage> = jsonl::read_all(&passages_path(dir))?;
        let store = Self::from_passages(passages)?;
        let index: Vec<IndexLine> = jsonl::read_all(&index_path(dir))?;
        if index.len() != store.len() || index.iter().zip(&store.passages).any(|(i, p)| i.hint != p.hint) {
            return Err(CorpusError::Index("hints.idx.jsonl does not match passages.jsonl".into()));
        }
        Ok(store)
    }
}

pub fn passages_path(dir: &Path) -> PathBuf {
    dir.join("passages.jsonl")
}

pub fn index_path(dir: &Path) -> PathBuf {
    dir.join("hints.idx.jsonl")
}

/// Fetch one passage from a saved corpus by seeking to its indexed offset,
/// without loading the passage file.
pub fn fetch_passage(dir: &Path, hint: &str) -> Result<Option<HintedPassage>, CorpusError> {
    let index: Vec<IndexLine> = jsonl::read_all(&index_path(dir))?;
    let Some(entry) = index.into_iter().find(|e| e.hint == hint) else {
        return Ok(None);
    };
    let path = passages_path(dir);
    let mut f = File::open(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    f.seek(SeekFrom::Start(entry.offset)).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    let mut line = String::new();
    BufReader::new(f.by_ref()).read_line(&mut line).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    let p: HintedPassage = jsonl::from_line(line.trim_end())?;
    if p.hint != hint {
        return Err(CorpusError::Index(format!("offset {} does not hold {hint:?}", entry.offset)));
    }
    Ok(Some(p))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTriple {
    pub question: String,
    pub hint: String,
    pub passage: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyntheticReport {
    pub triples: Vec<SyntheticTriple>,
    pub dropped_empty: usize,
    pub dropped_errors: usize,
}

/// Sample `n` passages and generate one question for each.
///
/// Empty generations and per-item backend errors drop that item and are
/// counted; the run continues.
pub async fn generate_synthetic_triples<B: Backend + ?Sized>(
    corpus: &CorpusStore,
    n: usize,
    exemplars: &[QgenExemplar],
    backend: &B,
    seed: u64,
    dialect: &PromptDialect,
    max_in_flight: usize,
) -> Result<SyntheticReport, CorpusError> {
    if exemplars.len() != QGEN_SHOTS {
        return Err(CorpusError::QgenShots(exemplars.len()));
    }
    let sep = dialect.block_separator();
    let params = SamplingParams::greedy(64).with_stop([dialect.block_separator()]);
    let picked = corpus.sample(n, seed)?;
    let mut report = SyntheticReport::default();
    let mut reqs = Vec::new();
    let mut sources = Vec::new();
    for p in picked {
        match build_question_generation_prompt(&p.text, exemplars, dialect) {
            Ok(prompt) => {
                reqs.push(GenerationRequest::new(prompt, params.clone()));
                sources.push(p);
            }
            Err(e) => {
                log::warn!("passage {:?} skipped: {e}", p.hint);
                report.dropped_errors += 1;
            }
        }
    }
    let results = generate_batch(backend, &reqs, max_in_flight.max(1), None).await.expect("bound is positive");
    for (p, r) in sources.into_iter().zip(results) {
        match r {
            Ok(g) => {
                let q = clean_generation(g.texts.first().map(String::as_str).unwrap_or(""), &sep);
                if q.is_empty() {
                    report.dropped_empty += 1;
                } else {
                    report.triples.push(SyntheticTriple { question: q, hint: p.hint.clone(), passage: p.text.clone() });
                }
            }
            Err(e) => {
                log::warn!("question generation for {:?} failed: {e}", p.hint);
                report.dropped_errors += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use recite_core::hint::parse_hint;

    fn page() -> DumpPage {
        DumpPage {
            title: "Child support".into(),
            lead: "Child support is a periodic payment.".into(),
            sections: vec![DumpSection {
                title: "Compliance and enforcement issues".into(),
                text: String::new(),
                sections: vec![DumpSection {
                    title: "Enforcement".into(),
                    text: "First   paragraph\nwraps here.\n\n\nSecond paragraph.".into(),
                    sections: vec![],
                }],
            }],
        }
    }

    #[test]
    fn paragraphs() {
        assert_eq!(split_paragraphs("a\nb\n\n  \nc  d\n"), vec!["a b", "c d"]);
        assert!(split_paragraphs("\n\n").is_empty());
    }

    #[test]
    fn one_page_three_paragraphs() {
        let ps = page_passages(&page()).unwrap();
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0].hint, "Child support --- Paragraph #1");
        assert!(ps[0].section_path.is_empty());
        assert_eq!(ps[1].text, "First paragraph wraps here.");
        assert_eq!(ps[2].hint, "Child support --- Compliance and enforcement issues --- Enforcement --- Paragraph #2");
    }

    #[test]
    fn duplicates_name_lines() {
        let err = CorpusStore::build([(1, page()), (4, page())], "dump.jsonl").unwrap_err();
        match err {
            CorpusError::Duplicate { line, first_line, .. } => assert_eq!((line, first_line), (4, 1)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_dump_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dump.jsonl");
        std::fs::write(&p, format!("{}\n{{\"lead\": 3}}\n", serde_json::to_string(&page()).unwrap())).unwrap();
        let msg = read_dump(&p).unwrap_err().to_string();
        assert!(msg.contains(":2:"), "{msg}");
    }

    #[test]
    fn wikitext_adapter() {
        let text = " = Child support = \n Lead text . \n = = Compliance = = \n = = = Enforcement = = = \n Para one . \n\n Para two . \n = Other = \n Body . \n";
        let pages = parse_wikitext(text.as_bytes(), "wiki.txt").unwrap();
        assert_eq!(pages.len(), 2);
        let store = CorpusStore::build(pages, "wiki.txt").unwrap();
        let hints: Vec<&str> = store.passages().iter().map(|p| p.hint.as_str()).collect();
        assert_eq!(
            hints,
            [
                "Child support --- Paragraph #1",
                "Child support --- Compliance --- Enforcement --- Paragraph #1",
                "Child support --- Compliance --- Enforcement --- Paragraph #2",
                "Other --- Paragraph #1",
            ]
        );
        let err = parse_wikitext(" = = Orphan = = \n".as_bytes(), "w").unwrap_err().to_string();
        assert!(err.contains("w:1"), "{err}");
    }

    #[test]
    fn persist_lookup_sample() {
        let store = CorpusStore::build([(1, page())], "d").unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let back = CorpusStore::load(dir.path()).unwrap();
        assert_eq!(back, store);
        let h = "Child support --- Compliance and enforcement issues --- Enforcement --- Paragraph #1";
        assert_eq!(fetch_passage(dir.path(), h).unwrap().unwrap().text, "First paragraph wraps here.");
        assert!(fetch_passage(dir.path(), "nope").unwrap().is_none());
        assert_eq!(back.by_hint(h).unwrap().para_index, 1);
        let a: Vec<_> = store.sample(2, 7).unwrap().iter().map(|p| p.hint.clone()).collect();
        let b: Vec<_> = back.sample(2, 7).unwrap().iter().map(|p| p.hint.clone()).collect();
        assert_eq!(a, b);
        assert!(store.sample(4, 0).is_err());
    }

    fn qgen() -> Vec<QgenExemplar> {
        (0..5).map(|i| QgenExemplar { evidence: format!("Evidence {i}."), question: format!("Question {i}?") }).collect()
    }

    #[tokio::test]
    async fn synthetic_triples_and_drops() {
        let store = CorpusStore::build([(1, page())], "d").unwrap();
        let d = PromptDialect::default();
        let mut b = ScriptedBackend::new();
        for (i, p) in store.passages().iter().enumerate() {
            let prompt = build_question_generation_prompt(&p.text, &qgen(), &d).unwrap();
            b.insert(&prompt, [if i == 1 { "  " } else { " What is it?\n\nRecitation: x" }]);
        }
        let r = generate_synthetic_triples(&store, 3, &qgen(), &b, 1, &d, 2).await.unwrap();
        assert_eq!(r.triples.len(), 2);
        assert_eq!(r.dropped_empty, 1);
        for t in &r.triples {
            assert_eq!(t.question, "What is it?");
            parse_hint(&t.hint).unwrap();
            assert_eq!(store.by_hint(&t.hint).unwrap().text, t.passage);
        }
        let four: Vec<_> = qgen().into_iter().take(4).collect();
        assert!(matches!(
            generate_synthetic_triples(&store, 1, &four, &b, 1, &d, 2).await,
            Err(CorpusError::QgenShots(4))
        ));
    }
}
