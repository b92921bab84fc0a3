use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use recite_core::{QuestionRecord, RunRecord};
use serde::{Deserialize, Serialize};

use super::Pipeline;
use crate::backend::CancelFlag;
use crate::jsonl::{self, Appender, JsonlError};

/// Layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    /// Open an existing directory without creating it.
    pub fn open(root: &Path) -> Self {
        RunDir { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("run.json")
    }

    pub fn records(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }

    pub fn questions(&self) -> PathBuf {
        self.root.join("questions.jsonl")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    /// Per-question wall-clock times. Kept out of `records.jsonl` so that
    /// file is byte-identical across reruns.
    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.jsonl")
    }

    /// Timestamps and other run metadata that legitimately differ per run.
    pub fn meta(&self) -> PathBuf {
        self.root.join("meta.json")
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Only the first `limit` questions.
    pub limit: Option<usize>,
    pub resume: bool,
    pub question_parallelism: usize,
    pub cancel: Option<CancelFlag>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { limit: None, resume: false, question_parallelism: 4, cancel: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub question_id: String,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    /// Completed records in input order.
    pub records: Vec<RunRecord>,
    pub executed: usize,
    pub reused: usize,
    pub failed: usize,
    /// Failed questions whose every path was a backend error.
    pub backend_failed: usize,
    pub cancelled: bool,
}

/// Read a records file, skipping lines that do not parse (a run killed
/// mid-write can leave a partial last line). A missing file reads as empty.
pub fn read_records_tolerant(path: &Path) -> Result<Vec<RunRecord>, JsonlError> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(JsonlError::Io { path: path.to_path_buf(), source }),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match jsonl::from_line::<RunRecord>(&line) {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn all_backend_errors(r: &RunRecord) -> bool {
    r.is_failed() && !r.paths.is_empty() && r.paths.iter().all(|p| p.status == recite_core::PathStatus::BackendError)
}

/// Answer `questions` in order with bounded concurrency, streaming each
/// record to `records.jsonl` as it completes.
///
/// With `resume`, records already on disk with this pipeline's fingerprint
/// and no error are reused; everything else is re-executed. The file is
/// finally rewritten in input order.
pub async fn run_dataset(
    pipeline: &Pipeline,
    questions: &[QuestionRecord],
    opts: &RunOptions,
    dir: &RunDir,
) -> Result<RunSummary, JsonlError> {
    let limit = opts.limit.unwrap_or(questions.len()).min(questions.len());
    let questions = &questions[..limit];

    let mut done: HashMap<String, RunRecord> = HashMap::new();
    if opts.resume {
        for r in read_records_tolerant(&dir.records())? {
            if r.config_fingerprint == pipeline.fingerprint() && !r.is_failed() {
                done.insert(r.question_id.clone(), r);
            }
        }
    } else {
        for p in [dir.records(), dir.timings()] {
            match std::fs::remove_file(&p) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => return Err(JsonlError::Io { path: p, source }),
            }
        }
    }

    let mut records_out = Appender::open(&dir.records())?;
    let mut timings_out = Appender::open(&dir.timings())?;
    let cancel = opts.cancel.clone();
    let done_ref = &done;

    let mut stream = stream::iter(questions)
        .map(|q| {
            let cancel = cancel.clone();
            async move {
                if let Some(r) = done_ref.get(&q.id) {
                    return Some((r.clone(), true));
                }
                if cancel.as_ref().is_some_and(CancelFlag::is_cancelled) {
                    return None;
                }
                Some((pipeline.answer(q).await, false))
            }
        })
        .buffered(opts.question_parallelism.max(1));

    let mut summary = RunSummary::default();
    while let Some(item) = stream.next().await {
        let Some((mut rec, reused)) = item else {
            summary.cancelled = true;
            continue;
        };
        if reused {
            summary.reused += 1;
        } else {
            summary.executed += 1;
            timings_out.append(&Timing { question_id: rec.question_id.clone(), wall_clock_ms: rec.wall_clock_ms })?;
            rec.wall_clock_ms = 0;
            records_out.append(&rec)?;
        }
        if rec.is_failed() {
            summary.failed += 1;
            if all_backend_errors(&rec) {
                summary.backend_failed += 1;
            }
        }
        summary.records.push(rec);
    }
    drop(records_out);
    jsonl::write_all(&dir.records(), summary.records.iter())?;
    Ok(summary)
}
