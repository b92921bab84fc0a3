//! One record per line, UTF-8, keys sorted.
//!
//! Records go through `serde_json::Value` before printing; its object map is
//! ordered, so equal records always produce identical bytes.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("record is not a single line")]
    MultiLine,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("serialization failed: {0}")]
    Serialize(serde_json::Error),
}

impl JsonlError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        JsonlError::Io { path: path.to_path_buf(), source }
    }
}

/// Serialize one record to a single line (no trailing newline).
pub fn to_line<T: Serialize>(record: &T) -> Result<String, JsonlError> {
    let value = serde_json::to_value(record).map_err(JsonlError::Serialize)?;
    serde_json::to_string(&value).map_err(JsonlError::Serialize)
}

/// Parse one line. Errors name the offending field (when serde knows it) and
/// the column offset.
pub fn from_line<T: DeserializeOwned>(line: &str) -> Result<T, JsonlError> {
    if line.trim_end_matches(['\n', '\r']).contains('\n') {
        return Err(JsonlError::MultiLine);
    }
    serde_json::from_str(line).map_err(|e| JsonlError::Parse {
        path: "<line>".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Read every non-blank line of a file.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Write records, replacing the file atomically (write to a sibling, rename).
pub fn write_all<'a, T, I>(path: &Path, records: I) -> Result<(), JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = File::create(&tmp).map_err(|e| JsonlError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for r in records {
            let line = to_line(r)?;
            writeln!(w, "{line}").map_err(|e| JsonlError::io(&tmp, e))?;
        }
        w.flush().map_err(|e| JsonlError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| JsonlError::io(path, e))
}

/// Append-only writer; each record is flushed as soon as it is written.
pub struct Appender {
    path: PathBuf,
    file: File,
}

impl Appender {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| JsonlError::io(path, e))?;
        Ok(Appender { path: path.to_path_buf(), file })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), JsonlError> {
        let mut line = to_line(record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| JsonlError::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use recite_core::{Dataset, QuestionRecord};

    fn q() -> QuestionRecord {
        QuestionRecord {
            id: "q1".into(),
            dataset: Dataset::TriviaQA,
            question: "Who opened London Bridge in 1973?".into(),
            gold_answers: vec!["Elizabeth II".into(), "Queen Elizabeth II".into()],
            gold_evidence: None,
            hop_count: 1,
        }
    }

    #[test]
    fn keys_sorted_single_line() {
        let line = to_line(&q()).unwrap();
        assert!(!line.contains('\n'));
        let keys: Vec<usize> = ["\"dataset\"", "\"gold_answers\"", "\"gold_evidence\"", "\"hop_count\"", "\"id\"", "\"question\""]
            .iter()
            .map(|k| line.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{line}");
        assert_eq!(from_line::<QuestionRecord>(&line).unwrap(), q());
    }

    #[test]
    fn missing_field_is_named() {
        let line = r#"{"dataset":"NQ","id":"x","question":"q","hop_count":1}"#;
        let err = from_line::<QuestionRecord>(line).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gold_answers"), "{msg}");
        assert!(matches!(err, JsonlError::Parse { column, .. } if column > 0));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.jsonl");
        write_all(&p, [q(), q()].iter()).unwrap();
        let mut a = Appender::open(&p).unwrap();
        a.append(&q()).unwrap();
        let back: Vec<QuestionRecord> = read_all(&p).unwrap();
        assert_eq!(back.len(), 3);
        std::fs::write(&p, "{\"id\":1}\n").unwrap();
        let err = read_all::<QuestionRecord>(&p).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }
}
