use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{whitespace_tokens, Backend};
use crate::scope::Task;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub case_id: String,
    pub task: Task,
    pub source_path: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    pub source_tokens: usize,
}

impl CaseManifest {
    pub fn read_source(&self) -> io::Result<String> {
        fs::read_to_string(&self.source_path)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}: no source file")]
    MissingSource(PathBuf),
    #[error("{0}: source file is empty")]
    EmptySource(PathBuf),
    #[error("{0}: no cases")]
    EmptyCorpus(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads `{root}/{id}/source.{c|js}` and optional `{root}/{id}/inputs/*.txt`
/// for every case directory. Token counts come from `tokenizer` when it can
/// count, otherwise from whitespace splitting.
pub fn ingest_corpus(
    root: &Path,
    task: Task,
    tokenizer: Option<&dyn Backend>,
) -> Result<Vec<CaseManifest>, IngestError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        if entry.file_type().map_err(io_err(root))?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    let mut out = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let source_path = dir.join(format!("source.{}", task.source_extension()));
        if !source_path.is_file() {
            return Err(IngestError::MissingSource(dir));
        }
        let source = fs::read_to_string(&source_path).map_err(io_err(&source_path))?;
        let counted = tokenizer
            .and_then(|b| b.count_tokens(&source))
            .unwrap_or_else(|| whitespace_tokens(&source));
        if source.trim().is_empty() || counted == 0 {
            return Err(IngestError::EmptySource(source_path));
        }
        let inputs_dir = dir.join("inputs");
        let mut inputs = Vec::new();
        if inputs_dir.is_dir() {
            for entry in fs::read_dir(&inputs_dir).map_err(io_err(&inputs_dir))? {
                let p = entry.map_err(io_err(&inputs_dir))?.path();
                if p.extension().is_some_and(|e| e == "txt") {
                    inputs.push(p);
                }
            }
            inputs.sort();
        }
        out.push(CaseManifest {
            case_id: dir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            task,
            source_path,
            inputs,
            source_tokens: counted,
        });
    }
    if out.is_empty() {
        return Err(IngestError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(out)
}
