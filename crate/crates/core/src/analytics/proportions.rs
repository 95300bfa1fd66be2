use std::collections::BTreeMap;
use std::io::Write;

use chrono::{TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::corpus::{Corpus, LabelIndex};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Row,
    Column,
    None,
}

/// Raw counts plus their normalized view; zero rows/columns stay zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub values: Vec<Vec<f64>>,
    pub normalization: Normalization,
}

impl ProportionMatrix {
    pub fn from_counts(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        counts: Vec<Vec<u64>>,
        normalization: Normalization,
    ) -> Self {
        let ncol = col_labels.len();
        let mut values: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
        match normalization {
            Normalization::None => {}
            Normalization::Row => {
                for row in &mut values {
                    let total: f64 = row.iter().sum();
                    if total > 0.0 {
                        row.iter_mut().for_each(|v| *v /= total);
                    }
                }
            }
            Normalization::Column => {
                for j in 0..ncol {
                    let total: f64 = values.iter().map(|r| r[j]).sum();
                    if total > 0.0 {
                        values.iter_mut().for_each(|r| r[j] /= total);
                    }
                }
            }
        }
        ProportionMatrix { row_labels, col_labels, counts, values, normalization }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row".to_string()];
        header.extend(self.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn frame_names() -> Vec<String> {
    Frame::ALL.iter().map(|f| f.canonical_name().to_string()).collect()
}

/// cell(g, f) = posts of group `g` whose label carries frame `f`.
pub fn frame_proportions(
    groups: &[(String, &Corpus)],
    labels: &LabelIndex,
    normalization: Normalization,
) -> ProportionMatrix {
    let counts = groups
        .iter()
        .map(|(_, c)| {
            let mut row = vec![0u64; Frame::COUNT];
            for p in c.iter() {
                if let Some(l) = labels.get(&p.id) {
                    for f in l.frame_set().iter() {
                        row[f.index()] += 1;
                    }
                }
            }
            row
        })
        .collect();
    ProportionMatrix::from_counts(groups.iter().map(|(g, _)| g.clone()).collect(), frame_names(), counts, normalization)
}

/// cell(f1, f2) = posts carrying both frames; the diagonal counts posts with the frame.
pub fn frame_cooccurrence(corpus: &Corpus, labels: &LabelIndex, normalization: Normalization) -> ProportionMatrix {
    let mut counts = vec![vec![0u64; Frame::COUNT]; Frame::COUNT];
    for p in corpus.iter() {
        if let Some(l) = labels.get(&p.id) {
            let set = l.frame_set();
            for a in set.iter() {
                for b in set.iter() {
                    counts[a.index()][b.index()] += 1;
                }
            }
        }
    }
    ProportionMatrix::from_counts(frame_names(), frame_names(), counts, normalization)
}

/// cell(a, b) = posts whose text contains both terms (case-insensitive substring).
pub fn cooccurrence(
    corpus: &Corpus,
    terms_a: &[String],
    terms_b: &[String],
    normalization: Normalization,
) -> Result<ProportionMatrix, AnalyticsError> {
    if terms_a.is_empty() || terms_b.is_empty() {
        return Err(AnalyticsError::EmptyTermList);
    }
    let la: Vec<String> = terms_a.iter().map(|t| t.to_lowercase()).collect();
    let lb: Vec<String> = terms_b.iter().map(|t| t.to_lowercase()).collect();
    let zero = || vec![vec![0u64; lb.len()]; la.len()];
    let counts = corpus
        .posts()
        .par_iter()
        .fold(zero, |mut acc, p| {
            let text = p.text.to_lowercase();
            let hits_b: Vec<bool> = lb.iter().map(|t| text.contains(t.as_str())).collect();
            for (i, a) in la.iter().enumerate() {
                if text.contains(a.as_str()) {
                    for (j, hit) in hits_b.iter().enumerate() {
                        if *hit {
                            acc[i][j] += 1;
                        }
                    }
                }
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            a
        });
    Ok(ProportionMatrix::from_counts(terms_a.to_vec(), terms_b.to_vec(), counts, normalization))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Month,
    Day,
}

/// Bucket key (`YYYY-MM` or `YYYY-MM-DD`, UTC) to per-frame counts indexed by [`Frame::index`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub buckets: BTreeMap<String, [u64; Frame::COUNT]>,
}

impl TimeSeries {
    pub fn frame_total(&self, frame: Frame) -> u64 {
        self.buckets.values().map(|c| c[frame.index()]).sum()
    }

    /// Long format: `bucket,frame,count`, every frame listed for every bucket.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bucket", "frame", "count"])?;
        for (bucket, counts) in &self.buckets {
            for f in Frame::ALL {
                w.write_record([bucket.as_str(), f.canonical_name(), &counts[f.index()].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn bucket_key(created_at: i64, granularity: Granularity) -> String {
    let t = Utc.timestamp_opt(created_at, 0).single().unwrap_or_default();
    match granularity {
        Granularity::Month => t.format("%Y-%m").to_string(),
        Granularity::Day => t.format("%Y-%m-%d").to_string(),
    }
}

/// Each labeled post adds one to every frame it carries; Filtered and unlabeled posts add nothing.
pub fn time_series(corpus: &Corpus, labels: &LabelIndex, granularity: Granularity) -> TimeSeries {
    let mut ts = TimeSeries::default();
    for p in corpus.iter() {
        let Some(l) = labels.get(&p.id) else { continue };
        if l.is_filtered() {
            continue;
        }
        let row = ts.buckets.entry(bucket_key(p.created_at, granularity)).or_insert([0; Frame::COUNT]);
        for f in l.frame_set().iter() {
            row[f.index()] += 1;
        }
    }
    ts
}
