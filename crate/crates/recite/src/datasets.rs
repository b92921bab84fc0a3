//! Readers mapping public dataset distributions onto [`QuestionRecord`].
//!
//! | adapter    | input                                                        |
//! |------------|--------------------------------------------------------------|
//! | `jsonl`    | one `QuestionRecord` per line                                |
//! | `nq-open`  | JSONL `{question, answer: [..], id?, long_answer?}`          |
//! | `triviaqa` | JSON `{Data: [{QuestionId, Question, Answer: {Value, Aliases}}]}` |
//! | `hotpotqa` | JSON array `[{_id, question, answer}]`                        |

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use recite_core::{Dataset, QuestionRecord, Validate};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adapter {
    Jsonl,
    NqOpen,
    Triviaqa,
    Hotpotqa,
}

impl FromStr for Adapter {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Adapter::Jsonl),
            "nq-open" => Ok(Adapter::NqOpen),
            "triviaqa" => Ok(Adapter::Triviaqa),
            "hotpotqa" => Ok(Adapter::Hotpotqa),
            other => Err(DatasetError::UnknownAdapter(other.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("unknown dataset adapter {0:?} (expected jsonl, nq-open, triviaqa or hotpotqa)")]
    UnknownAdapter(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: record {record}: {message}")]
    Invalid { path: PathBuf, record: String, message: String },
    #[error("{path}: duplicate question id {id:?}")]
    DuplicateId { path: PathBuf, id: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.into(), source }
}

fn jsonl_values<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, DatasetError> {
    let f = File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Parse { path: path.into(), line: i + 1, message: e.to_string() })?;
        out.push((i + 1, v));
    }
    Ok(out)
}

fn json_value<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let f = File::open(path).map_err(io(path))?;
    serde_json::from_reader(BufReader::new(f))
        .map_err(|e| DatasetError::Parse { path: path.into(), line: e.line(), message: e.to_string() })
}

fn dedup(mut v: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    v.retain(|s| !s.trim().is_empty() && seen.insert(s.clone()));
    v
}

#[derive(Deserialize)]
struct NqLine {
    question: String,
    answer: Vec<String>,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    long_answer: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "PascalCase")]
struct TqaFile {
    data: Vec<TqaItem>,
}

#[derive(Deserialize)]
#[serde(rename_all = "PascalCase")]
struct TqaItem {
    question_id: String,
    question: String,
    answer: TqaAnswer,
}

#[derive(Deserialize)]
#[serde(rename_all = "PascalCase")]
struct TqaAnswer {
    value: String,
    #[serde(default)]
    aliases: Vec<String>,
}

#[derive(Deserialize)]
struct HotpotItem {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    answer: String,
}

/// Load and validate every record. Question text is trimmed.
pub fn load(path: &Path, adapter: Adapter) -> Result<Vec<QuestionRecord>, DatasetError> {
    let records: Vec<QuestionRecord> = match adapter {
        Adapter::Jsonl => jsonl_values::<QuestionRecord>(path)?.into_iter().map(|(_, r)| r).collect(),
        Adapter::NqOpen => jsonl_values::<NqLine>(path)?
            .into_iter()
            .map(|(line, n)| QuestionRecord {
                id: n.id.unwrap_or_else(|| format!("nq-{line}")),
                dataset: Dataset::NQ,
                question: n.question,
                gold_answers: dedup(n.answer),
                gold_evidence: n.long_answer.filter(|s| !s.trim().is_empty()),
                hop_count: 1,
            })
            .collect(),
        Adapter::Triviaqa => json_value::<TqaFile>(path)?
            .data
            .into_iter()
            .map(|t| {
                let mut golds = vec![t.answer.value];
                golds.extend(t.answer.aliases);
                QuestionRecord {
                    id: t.question_id,
                    dataset: Dataset::TriviaQA,
                    question: t.question,
                    gold_answers: dedup(golds),
                    gold_evidence: None,
                    hop_count: 1,
                }
            })
            .collect(),
        Adapter::Hotpotqa => json_value::<Vec<HotpotItem>>(path)?
            .into_iter()
            .map(|h| QuestionRecord {
                id: h.id,
                dataset: Dataset::HotpotQA,
                question: h.question,
                gold_answers: vec![h.answer],
                gold_evidence: None,
                hop_count: 2,
            })
            .collect(),
    };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for mut r in records {
        r.question = r.question.trim().to_string();
        let v = r.violations();
        if !v.is_empty() {
            return Err(DatasetError::Invalid { path: path.into(), record: r.id.clone(), message: v.join("; ") });
        }
        if !seen.insert(r.id.clone()) {
            return Err(DatasetError::DuplicateId { path: path.into(), id: r.id });
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(name: &str, body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        (dir, p)
    }

    #[test]
    fn nq_open() {
        let (_d, p) = write("nq.jsonl", "{\"question\": \"who wrote hamlet \", \"answer\": [\"Shakespeare\", \"Shakespeare\", \"William Shakespeare\"]}\n");
        let r = load(&p, Adapter::NqOpen).unwrap();
        assert_eq!(r[0].id, "nq-1");
        assert_eq!(r[0].question, "who wrote hamlet");
        assert_eq!(r[0].gold_answers, vec!["Shakespeare", "William Shakespeare"]);
    }

    #[test]
    fn triviaqa() {
        let (_d, p) = write(
            "tqa.json",
            r#"{"Data": [{"QuestionId": "tc_1", "Question": "Who opened London Bridge in 1973?",
                "Answer": {"Value": "Elizabeth II", "Aliases": ["Queen Elizabeth II", "Elizabeth II"]}}]}"#,
        );
        let r = load(&p, Adapter::Triviaqa).unwrap();
        assert_eq!(r[0].gold_answers, vec!["Elizabeth II", "Queen Elizabeth II"]);
        assert_eq!(r[0].dataset, Dataset::TriviaQA);
    }

    #[test]
    fn hotpot_is_two_hop() {
        let (_d, p) = write("h.json", r#"[{"_id": "a1", "question": "Q?", "answer": "yes", "type": "comparison"}]"#);
        assert_eq!(load(&p, Adapter::Hotpotqa).unwrap()[0].hop_count, 2);
    }

    #[test]
    fn errors() {
        let (_d, p) = write("nq.jsonl", "{\"question\": \"q\", \"answer\": []}\n");
        assert!(matches!(load(&p, Adapter::NqOpen), Err(DatasetError::Invalid { .. })));
        let (_d, p) = write("q.jsonl", "\n{\"id\": 5}\n");
        let e = load(&p, Adapter::Jsonl).unwrap_err().to_string();
        assert!(e.contains(":2:"), "{e}");
        assert!("squad".parse::<Adapter>().is_err());
    }
}
