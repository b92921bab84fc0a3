//! Few-shot exemplar pools loaded from a prompt-set directory.
//!
//! The directory holds up to four TOML files, each an array of
//! `[[exemplar]]` tables:
//!
//! | file        | fields                                          |
//! |-------------|-------------------------------------------------|
//! | `qa.toml`   | `question`, `answer`, optional `recitations`    |
//! | `cot.toml`  | `question`, `answer`, `rationale`               |
//! | `hint.toml` | `question`, `hint`, `passage`                   |
//! | `qgen.toml` | `evidence`, `question`                          |
//!
//! Missing files yield empty pools; schemes that need a pool fail when the
//! pipeline is built.

use std::path::{Path, PathBuf};

use recite_core::prompting::{HintExemplar, QgenExemplar};
use recite_core::{Exemplar, Validate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PromptSetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: exemplar {index}: {message}")]
    Invalid { path: PathBuf, index: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub qa: Vec<Exemplar>,
    pub cot: Vec<Exemplar>,
    pub hint: Vec<HintExemplar>,
    pub qgen: Vec<QgenExemplar>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct File<T> {
    #[serde(default = "Vec::new")]
    exemplar: Vec<T>,
}

fn load_file<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, PromptSetError> {
    let path = dir.join(name);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(PromptSetError::Io { path, source }),
    };
    let parsed: File<T> =
        toml::from_str(&text).map_err(|e| PromptSetError::Parse { path: path.clone(), message: e.to_string() })?;
    Ok(parsed.exemplar)
}

impl PromptSet {
    pub fn load(dir: &Path) -> Result<Self, PromptSetError> {
        if !dir.is_dir() {
            return Err(PromptSetError::Io {
                path: dir.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "prompt-set directory not found"),
            });
        }
        let set = PromptSet {
            qa: load_file(dir, "qa.toml")?,
            cot: load_file(dir, "cot.toml")?,
            hint: load_file(dir, "hint.toml")?,
            qgen: load_file(dir, "qgen.toml")?,
        };
        for (file, pool) in [("qa.toml", &set.qa), ("cot.toml", &set.cot)] {
            for (index, e) in pool.iter().enumerate() {
                let v = e.violations();
                if !v.is_empty() {
                    return Err(PromptSetError::Invalid { path: dir.join(file), index, message: v.join("; ") });
                }
            }
        }
        for (index, e) in set.hint.iter().enumerate() {
            if let Err(err) = recite_core::hint::parse_hint(&e.hint) {
                return Err(PromptSetError::Invalid { path: dir.join("hint.toml"), index, message: err.to_string() });
            }
        }
        Ok(set)
    }

    /// Write the set back out in the loadable layout.
    pub fn save(&self, dir: &Path) -> Result<(), PromptSetError> {
        std::fs::create_dir_all(dir).map_err(|source| PromptSetError::Io { path: dir.to_path_buf(), source })?;
        fn put<T: Serialize>(dir: &Path, name: &str, items: &[T]) -> Result<(), PromptSetError> {
            if items.is_empty() {
                return Ok(());
            }
            let path = dir.join(name);
            #[derive(Serialize)]
            struct Out<'a, T> {
                exemplar: &'a [T],
            }
            let text = toml::to_string(&Out { exemplar: items })
                .map_err(|e| PromptSetError::Parse { path: path.clone(), message: e.to_string() })?;
            std::fs::write(&path, text).map_err(|source| PromptSetError::Io { path, source })
        }
        put(dir, "qa.toml", &self.qa)?;
        put(dir, "cot.toml", &self.cot)?;
        put(dir, "hint.toml", &self.hint)?;
        put(dir, "qgen.toml", &self.qgen)
    }
}
