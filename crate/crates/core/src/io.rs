//! JSON-lines readers and writers shared by the pipeline stages.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Annotation, Post};

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads one JSON object per line; blank lines are skipped, line numbers are 1-based.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| JsonlError::Record {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_posts(path: &Path, posts: &[Post]) -> io::Result<()> {
    write_jsonl(path, posts)
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> io::Result<()> {
    write_jsonl(path, annotations)
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, JsonlError> {
    let anns: Vec<Annotation> = read_jsonl(path)?;
    for (i, a) in anns.iter().enumerate() {
        a.validate().map_err(|e| JsonlError::Record {
            line: i + 1,
            reason: e.to_string(),
        })?;
    }
    Ok(anns)
}
