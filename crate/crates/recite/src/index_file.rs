//! BM25 index sidecar: a version header line, then one `DocStats` per line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use recite_core::bm25::{Bm25Error, Bm25Index, Bm25Params, DocStats};
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};

const FORMAT: &str = "recite-bm25";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    k1: f64,
    b: f64,
    docs: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Bm25(#[from] Bm25Error),
}

pub fn save(index: &Bm25Index, path: &Path) -> Result<(), IndexFileError> {
    let p = index.params();
    let header = Header { format: FORMAT.into(), version: VERSION, k1: p.k1, b: p.b, docs: index.doc_count() };
    let mut lines = vec![serde_json::to_value(&header).map_err(JsonlError::Serialize)?];
    for d in index.doc_stats() {
        lines.push(serde_json::to_value(&d).map_err(JsonlError::Serialize)?);
    }
    jsonl::write_all(path, lines.iter())?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Bm25Index, IndexFileError> {
    let file = File::open(path).map_err(|source| IndexFileError::Io { path: path.into(), source })?;
    let fmt = |line: usize, message: String| IndexFileError::Format { path: path.into(), line, message };
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: Header = match lines.next() {
        Some((_, l)) => {
            let l = l.map_err(|source| IndexFileError::Io { path: path.into(), source })?;
            serde_json::from_str(&l).map_err(|e| fmt(1, format!("bad header: {e}")))?
        }
        None => return Err(fmt(1, "empty index file".into())),
    };
    if header.format != FORMAT {
        return Err(fmt(1, format!("format {:?} is not {FORMAT:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(fmt(1, format!("unsupported version {}", header.version)));
    }
    let mut docs = Vec::with_capacity(header.docs);
    for (i, l) in lines {
        let l = l.map_err(|source| IndexFileError::Io { path: path.into(), source })?;
        if l.trim().is_empty() {
            continue;
        }
        let d: DocStats = serde_json::from_str(&l).map_err(|e| fmt(i + 1, e.to_string()))?;
        docs.push(d);
    }
    if docs.len() != header.docs {
        return Err(fmt(1, format!("header says {} docs, file has {}", header.docs, docs.len())));
    }
    Ok(Bm25Index::from_stats(docs, Bm25Params { k1: header.k1, b: header.b })?)
}
