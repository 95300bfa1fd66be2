use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::ClassifierError;
use crate::corpus::{Annotation, Annotator, AnnotatorKind, Corpus};
use crate::frame::{parse_frame, FrameSet, LabelSet};

/// `0` for Filtered, otherwise canonical frame names joined by `, `.
pub fn format_labels(labels: &LabelSet) -> String {
    match labels {
        LabelSet::Filtered => "0".to_string(),
        LabelSet::Frames(set) => set.iter().map(|f| f.canonical_name()).collect::<Vec<_>>().join(", "),
    }
}

/// Inverse of [`format_labels`]; returns `None` for anything unrecognized.
pub fn parse_labels(s: &str) -> Option<LabelSet> {
    let s = s.trim();
    if s == "0" {
        return Some(LabelSet::Filtered);
    }
    let mut set = FrameSet::empty();
    for part in s.split(',') {
        set.insert(parse_frame(part.trim()).ok()?);
    }
    LabelSet::frames(set).ok()
}

pub fn write_predictions<'a, W: Write>(
    mut out: W,
    rows: impl IntoIterator<Item = (&'a str, &'a LabelSet)>,
) -> std::io::Result<()> {
    for (id, labels) in rows {
        writeln!(out, "{id}\t{}", format_labels(labels))?;
    }
    out.flush()
}

/// Reads `post_id \t labels` lines, reporting 1-based line numbers on error.
pub fn read_predictions(path: &Path) -> Result<Vec<(usize, String, LabelSet)>, ClassifierError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, labels) = line.split_once('\t').ok_or(ClassifierError::MalformedLine(line_no))?;
        let labels = parse_labels(labels).ok_or(ClassifierError::UnknownLabel(line_no))?;
        out.push((line_no, id.trim().to_string(), labels));
    }
    Ok(out)
}

/// Turns an external predictions file into model annotations.
pub fn import_predictions(path: &Path, corpus: &Corpus, annotator_id: &str) -> Result<Vec<Annotation>, ClassifierError> {
    let annotator = Annotator::new(annotator_id, AnnotatorKind::Model);
    read_predictions(path)?
        .into_iter()
        .map(|(line, id, labels)| {
            if !corpus.contains(&id) {
                return Err(ClassifierError::UnresolvedPost(line));
            }
            Ok(Annotation::new(id, annotator.clone(), labels, 0))
        })
        .collect()
}
