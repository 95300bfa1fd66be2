//! Inter-annotator agreement and reference-based multi-label metrics.
//!
//! Every annotator in turn serves as the reference; scores are reported as
//! mean ± sample standard deviation across references. Fleiss' kappa is
//! computed per label on the binary presence/absence of that label and
//! macro-averaged over the nine frames.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Annotation, LabelIndex};
use crate::frame::{Frame, Label, LabelSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgreementError {
    #[error("rating matrix is incomplete: {0}")]
    IncompleteMatrix(String),
    #[error("at least two raters are required, got {0}")]
    TooFewRaters(usize),
    #[error("rating matrix has no items")]
    NoItems,
    #[error("kappa is undefined: every rating falls in one category but observed agreement is {observed}")]
    DegenerateKappa { observed: f64 },
    #[error("system and reference cover different items")]
    ItemSetMismatch,
    #[error("unknown rater `{0}`")]
    UnknownRater(String),
}

/// Complete item × rater table of label sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    item_ids: Vec<String>,
    raters: Vec<String>,
    /// `cells[item][rater]`
    cells: Vec<Vec<LabelSet>>,
}

impl RatingMatrix {
    pub fn new(
        item_ids: Vec<String>,
        raters: Vec<String>,
        cells: Vec<Vec<LabelSet>>,
    ) -> Result<Self, AgreementError> {
        if cells.len() != item_ids.len() {
            return Err(AgreementError::IncompleteMatrix(format!(
                "{} items but {} rows",
                item_ids.len(),
                cells.len()
            )));
        }
        if let Some((i, row)) = cells.iter().enumerate().find(|(_, r)| r.len() != raters.len()) {
            return Err(AgreementError::IncompleteMatrix(format!(
                "item `{}` has {} ratings, expected {}",
                item_ids[i],
                row.len(),
                raters.len()
            )));
        }
        Ok(RatingMatrix {
            item_ids,
            raters,
            cells,
        })
    }

    /// Builds a matrix from annotations keyed by annotator id.
    ///
    /// With `complete_only`, items not rated by every rater are dropped; otherwise
    /// a missing rating is an error. Items and raters are sorted by id.
    pub fn from_annotations<'a>(
        annotations: impl IntoIterator<Item = &'a Annotation>,
        complete_only: bool,
    ) -> Result<Self, AgreementError> {
        let mut by_item: BTreeMap<String, BTreeMap<String, LabelSet>> = BTreeMap::new();
        let mut raters = std::collections::BTreeSet::new();
        for a in annotations {
            raters.insert(a.annotator.id.clone());
            by_item
                .entry(a.post_id.clone())
                .or_default()
                .insert(a.annotator.id.clone(), a.labels);
        }
        let raters: Vec<String> = raters.into_iter().collect();
        let mut item_ids = Vec::new();
        let mut cells = Vec::new();
        for (item, row) in by_item {
            if row.len() != raters.len() {
                if complete_only {
                    continue;
                }
                let missing = raters.iter().find(|r| !row.contains_key(*r)).unwrap();
                return Err(AgreementError::IncompleteMatrix(format!(
                    "item `{item}` has no rating from `{missing}`"
                )));
            }
            cells.push(raters.iter().map(|r| row[r]).collect());
            item_ids.push(item);
        }
        RatingMatrix::new(item_ids, raters, cells)
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn cell(&self, item: usize, rater: usize) -> LabelSet {
        self.cells[item][rater]
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    /// Column of one rater as a label index.
    pub fn column(&self, rater: usize) -> LabelIndex {
        self.item_ids
            .iter()
            .zip(&self.cells)
            .map(|(id, row)| (id.clone(), row[rater]))
            .collect()
    }

    fn rater_position(&self, id: &str) -> Result<usize, AgreementError> {
        self.raters
            .iter()
            .position(|r| r == id)
            .ok_or_else(|| AgreementError::UnknownRater(id.to_string()))
    }
}

/// Fleiss' kappa for the presence of one label, treated as a two-category rating.
///
/// When every rating lands in the same category the chance term is 1; this is
/// reported as perfect agreement.
pub fn fleiss_kappa_binary(matrix: &RatingMatrix, label: impl Into<Label>) -> Result<f64, AgreementError> {
    let label = label.into();
    let n = matrix.n_raters();
    if n < 2 {
        return Err(AgreementError::TooFewRaters(n));
    }
    if matrix.n_items() == 0 {
        return Err(AgreementError::NoItems);
    }
    let nf = n as f64;
    let mut sum_p_i = 0.0;
    let mut positives = 0usize;
    for row in &matrix.cells {
        let pos = row.iter().filter(|l| l.has_label(label)).count();
        let neg = n - pos;
        positives += pos;
        sum_p_i += ((pos * pos + neg * neg) as f64 - nf) / (nf * (nf - 1.0));
    }
    let items = matrix.n_items() as f64;
    let p_bar = sum_p_i / items;
    let p_pos = positives as f64 / (items * nf);
    let p_e = p_pos * p_pos + (1.0 - p_pos) * (1.0 - p_pos);
    if positives == 0 || positives == matrix.n_items() * n {
        return if (p_bar - 1.0).abs() < 1e-12 {
            Ok(1.0)
        } else {
            Err(AgreementError::DegenerateKappa { observed: p_bar })
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn scores(&self) -> Prf {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }

    fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn as_array(&self) -> [f64; 3] {
        [self.precision, self.recall, self.f1]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Prf {
            precision: a[0],
            recall: a[1],
            f1: a[2],
        }
    }
}

/// Scores of one system against one reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrfReport {
    /// Indexed by [`Label::index`].
    pub counts: [Counts; Label::COUNT],
    pub per_label: [Prf; Label::COUNT],
    /// Pooled over the nine frames and Filtered.
    pub micro: Prf,
    /// Unweighted mean over the nine frames and Filtered.
    pub macro_: Prf,
    pub micro_frames: Prf,
    pub macro_frames: Prf,
}

impl PrfReport {
    pub fn label(&self, label: impl Into<Label>) -> Prf {
        self.per_label[label.into().index()]
    }

    fn from_counts(counts: [Counts; Label::COUNT]) -> Self {
        let per_label = counts.map(|c| c.scores());
        let pooled = |labels: &[Label]| {
            let mut total = Counts::default();
            for l in labels {
                total.add(&counts[l.index()]);
            }
            total.scores()
        };
        let mean = |labels: &[Label]| {
            let mut acc = [0.0; 3];
            for l in labels {
                for (a, v) in acc.iter_mut().zip(per_label[l.index()].as_array()) {
                    *a += v;
                }
            }
            Prf::from_array(acc.map(|a| a / labels.len() as f64))
        };
        let frames: Vec<Label> = Frame::ALL.iter().map(|&f| Label::Frame(f)).collect();
        PrfReport {
            counts,
            per_label,
            micro: pooled(&Label::ALL),
            macro_: mean(&Label::ALL),
            micro_frames: pooled(&frames),
            macro_frames: mean(&frames),
        }
    }

    /// Flattened as per-label (p, r, f1) followed by the four aggregates.
    fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(SHEET_LEN);
        for p in self.per_label.iter().chain([&self.micro, &self.macro_, &self.micro_frames, &self.macro_frames]) {
            v.extend(p.as_array());
        }
        v
    }
}

const SHEET_LEN: usize = (Label::COUNT + 4) * 3;

fn count_pairs(pairs: impl IntoIterator<Item = (LabelSet, LabelSet)>) -> [Counts; Label::COUNT] {
    let mut counts = [Counts::default(); Label::COUNT];
    for (sys, gold) in pairs {
        for label in Label::ALL {
            let c = &mut counts[label.index()];
            match (sys.has_label(label), gold.has_label(label)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    counts
}

/// Per-label precision/recall/F1 of `system` scored against `reference`.
pub fn prf_against_reference(system: &LabelIndex, reference: &LabelIndex) -> Result<PrfReport, AgreementError> {
    if system.len() != reference.len() {
        return Err(AgreementError::ItemSetMismatch);
    }
    let mut pairs = Vec::with_capacity(system.len());
    for (id, sys) in system.iter() {
        let gold = reference.get(id).ok_or(AgreementError::ItemSetMismatch)?;
        pairs.push((*sys, *gold));
    }
    Ok(PrfReport::from_counts(count_pairs(pairs)))
}

fn prf_columns(matrix: &RatingMatrix, system: usize, reference: usize) -> PrfReport {
    PrfReport::from_counts(count_pairs(
        matrix.cells.iter().map(|row| (row[system], row[reference])),
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample (n−1) standard deviation; sd is 0 for a single value.
    pub fn of(values: &[f64]) -> MeanSd {
        let n = values.len();
        if n == 0 {
            return MeanSd::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PrfSummary {
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub subject: Option<String>,
    pub n_items: usize,
    pub references: Vec<String>,
    pub per_label: BTreeMap<Label, PrfSummary>,
    pub micro: PrfSummary,
    pub macro_: PrfSummary,
    pub micro_frames: PrfSummary,
    pub macro_frames: PrfSummary,
    pub fleiss_kappa_per_label: BTreeMap<Label, f64>,
    /// Mean of the nine per-frame kappas.
    pub fleiss_kappa_macro: f64,
}

fn summarize(sheets: &[Vec<f64>]) -> Vec<MeanSd> {
    (0..SHEET_LEN)
        .map(|k| MeanSd::of(&sheets.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect()
}

/// Agreement of a subject (model/LLM column) or of the raters among themselves.
///
/// With a subject, the subject is scored against every other rater; without,
/// each rater is a reference for the mean score of all other raters. Kappa
/// covers every column of the matrix.
pub fn cross_annotator_report(
    matrix: &RatingMatrix,
    subject: Option<&str>,
) -> Result<AgreementReport, AgreementError> {
    let n = matrix.n_raters();
    if n < 2 {
        return Err(AgreementError::TooFewRaters(n));
    }
    if matrix.n_items() == 0 {
        return Err(AgreementError::NoItems);
    }
    let subject_pos = subject.map(|s| matrix.rater_position(s)).transpose()?;
    let references: Vec<usize> = (0..n).filter(|&r| Some(r) != subject_pos).collect();
    let sheets: Vec<Vec<f64>> = references
        .iter()
        .map(|&r| match subject_pos {
            Some(s) => prf_columns(matrix, s, r).to_vec(),
            None => {
                let others: Vec<Vec<f64>> = (0..n)
                    .filter(|&s| s != r)
                    .map(|s| prf_columns(matrix, s, r).to_vec())
                    .collect();
                (0..SHEET_LEN)
                    .map(|k| others.iter().map(|o| o[k]).sum::<f64>() / others.len() as f64)
                    .collect()
            }
        })
        .collect();
    let stats = summarize(&sheets);
    let triple = |slot: usize| PrfSummary {
        precision: stats[slot * 3],
        recall: stats[slot * 3 + 1],
        f1: stats[slot * 3 + 2],
    };
    let per_label = Label::ALL.iter().map(|l| (*l, triple(l.index()))).collect();
    let mut kappas = BTreeMap::new();
    for label in Label::ALL {
        kappas.insert(label, fleiss_kappa_binary(matrix, label)?);
    }
    let fleiss_kappa_macro =
        Frame::ALL.iter().map(|f| kappas[&Label::Frame(*f)]).sum::<f64>() / Frame::COUNT as f64;
    Ok(AgreementReport {
        subject: subject.map(str::to_string),
        n_items: matrix.n_items(),
        references: references.iter().map(|&r| matrix.raters[r].clone()).collect(),
        per_label,
        micro: triple(Label::COUNT),
        macro_: triple(Label::COUNT + 1),
        micro_frames: triple(Label::COUNT + 2),
        macro_frames: triple(Label::COUNT + 3),
        fleiss_kappa_per_label: kappas,
        fleiss_kappa_macro,
    })
}

/// Writes the report as CSV: one row per label, then the micro/macro aggregates
/// with and without the Filtered label.
pub fn write_report_csv<W: Write>(report: &AgreementReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "p_mean", "p_sd", "r_mean", "r_sd", "f1_mean", "f1_sd", "kappa"])?;
    let fmt = |v: f64| format!("{v:.6}");
    let mut row = |name: &str, s: &PrfSummary, kappa: Option<f64>| {
        w.write_record([
            name.to_string(),
            fmt(s.precision.mean),
            fmt(s.precision.sd),
            fmt(s.recall.mean),
            fmt(s.recall.sd),
            fmt(s.f1.mean),
            fmt(s.f1.sd),
            kappa.map(fmt).unwrap_or_default(),
        ])
    };
    for (label, s) in &report.per_label {
        row(label.name(), s, report.fleiss_kappa_per_label.get(label).copied())?;
    }
    row("micro", &report.micro, None)?;
    row("macro", &report.macro_, None)?;
    row("micro_frames", &report.micro_frames, None)?;
    row("macro_frames", &report.macro_frames, Some(report.fleiss_kappa_macro))?;
    w.flush()?;
    Ok(())
}

/// Label index keyed by item for the given rater, handy for ad-hoc comparisons.
pub fn columns_by_rater(matrix: &RatingMatrix) -> HashMap<String, LabelIndex> {
    (0..matrix.n_raters())
        .map(|r| (matrix.raters[r].clone(), matrix.column(r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameSet;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fs(frames: &[Frame]) -> LabelSet {
        LabelSet::Frames(frames.iter().copied().collect())
    }

    fn matrix(rows: Vec<Vec<LabelSet>>) -> RatingMatrix {
        let raters = (0..rows[0].len()).map(|r| format!("r{r}")).collect();
        let items = (0..rows.len()).map(|i| format!("i{i}")).collect();
        RatingMatrix::new(items, raters, rows).unwrap()
    }

    #[test]
    fn kappa_perfect_agreement_with_both_categories() {
        let pos = fs(&[Frame::GovCrit]);
        let neg = fs(&[Frame::HarmGen]);
        let m = matrix(vec![vec![pos; 3], vec![neg; 3]]);
        assert_abs_diff_eq!(fleiss_kappa_binary(&m, Frame::GovCrit).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kappa_total_disagreement() {
        // P̄ = 0, P̄ₑ = 0.5 → κ = −1
        let pos = fs(&[Frame::GovCrit]);
        let neg = fs(&[Frame::HarmGen]);
        let m = matrix(vec![vec![pos, neg], vec![neg, pos]]);
        assert_abs_diff_eq!(fleiss_kappa_binary(&m, Frame::GovCrit).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn kappa_single_category_is_one() {
        let m = matrix(vec![vec![fs(&[Frame::HarmGen]); 2]; 3]);
        assert_eq!(fleiss_kappa_binary(&m, Frame::GovCrit).unwrap(), 1.0);
    }

    #[test]
    fn kappa_errors() {
        let m = matrix(vec![vec![LabelSet::Filtered]]);
        assert_eq!(fleiss_kappa_binary(&m, Frame::GovCrit), Err(AgreementError::TooFewRaters(1)));
        let bad = RatingMatrix::new(vec!["a".into()], vec!["x".into(), "y".into()], vec![vec![LabelSet::Filtered]]);
        assert!(matches!(bad, Err(AgreementError::IncompleteMatrix(_))));
    }

    #[test]
    fn prf_identity_and_disjoint() {
        let a: LabelIndex = [("1".to_string(), fs(&[Frame::GovCrit, Frame::Nimby])), ("2".to_string(), LabelSet::Filtered)]
            .into_iter()
            .collect();
        let r = prf_against_reference(&a, &a).unwrap();
        for label in [Label::Frame(Frame::GovCrit), Label::Frame(Frame::Nimby), Label::Filtered] {
            assert_eq!(r.label(label), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        }
        assert_eq!(r.label(Frame::HarmGen), Prf::default());

        let b: LabelIndex = [("1".to_string(), fs(&[Frame::HarmGen])), ("2".to_string(), fs(&[Frame::SolnInt]))]
            .into_iter()
            .collect();
        let r = prf_against_reference(&b, &a).unwrap();
        for l in Label::ALL {
            assert_eq!(r.label(l).f1, 0.0);
        }
    }

    #[test]
    fn prf_three_item_hand_count() {
        // sys:  {G,M}, {G}, Filtered
        // gold: {G},   {M}, {M}
        // G: tp1 fp1 fn0 → p .5 r 1; M: tp0 fp1 fn2; Filtered: fp1.
        let sys: LabelIndex = [
            ("a".to_string(), fs(&[Frame::GovCrit, Frame::MoneyAid])),
            ("b".to_string(), fs(&[Frame::GovCrit])),
            ("c".to_string(), LabelSet::Filtered),
        ]
        .into_iter()
        .collect();
        let gold: LabelIndex = [
            ("a".to_string(), fs(&[Frame::GovCrit])),
            ("b".to_string(), fs(&[Frame::MoneyAid])),
            ("c".to_string(), fs(&[Frame::MoneyAid])),
        ]
        .into_iter()
        .collect();
        let r = prf_against_reference(&sys, &gold).unwrap();
        let g = r.label(Frame::GovCrit);
        assert_eq!((g.precision, g.recall), (0.5, 1.0));
        assert_abs_diff_eq!(g.f1, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r.label(Frame::MoneyAid), Prf::default());
        assert_eq!(r.counts[Label::Filtered.index()], Counts { tp: 0, fp: 1, fn_: 0 });
        // micro: tp1 fp3 fn2
        assert_abs_diff_eq!(r.micro.precision, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.micro.recall, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.macro_.f1, (2.0 / 3.0) / 10.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.macro_frames.f1, (2.0 / 3.0) / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn item_mismatch() {
        let a: LabelIndex = [("1".to_string(), LabelSet::Filtered)].into_iter().collect();
        let b: LabelIndex = [("2".to_string(), LabelSet::Filtered)].into_iter().collect();
        assert_eq!(prf_against_reference(&a, &b).unwrap_err(), AgreementError::ItemSetMismatch);
    }

    #[test]
    fn identical_annotators_report() {
        let rows = vec![
            vec![fs(&[Frame::GovCrit]); 2],
            vec![fs(&[Frame::Nimby, Frame::HarmGen]); 2],
            vec![LabelSet::Filtered; 2],
        ];
        let rep = cross_annotator_report(&matrix(rows), None).unwrap();
        for l in [Label::Frame(Frame::GovCrit), Label::Frame(Frame::Nimby), Label::Filtered] {
            assert_eq!(rep.per_label[&l].f1, MeanSd { mean: 1.0, sd: 0.0 });
        }
        assert_eq!(rep.micro.f1, MeanSd { mean: 1.0, sd: 0.0 });
    }

    #[test]
    fn subject_identical_to_one_reference() {
        // Columns: subject, r1 (== subject), r2, r3. GovCrit-only view:
        // vs r1: f1 = 1; vs r2: tp1 fp1 fn0 → 2/3; vs r3: tp0 fp2 fn1 → 0.
        let g = fs(&[Frame::GovCrit]);
        let h = fs(&[Frame::HarmGen]);
        let rows = vec![vec![g, g, g, h], vec![g, g, h, h], vec![h, h, h, g]];
        let items = vec!["a".into(), "b".into(), "c".into()];
        let raters = vec!["subj".into(), "r1".into(), "r2".into(), "r3".into()];
        let m = RatingMatrix::new(items, raters, rows).unwrap();
        let rep = cross_annotator_report(&m, Some("subj")).unwrap();
        let f1s = [1.0, 2.0 / 3.0, 0.0];
        let mean = f1s.iter().sum::<f64>() / 3.0;
        let sd = (f1s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        let got = rep.per_label[&Label::Frame(Frame::GovCrit)].f1;
        assert_abs_diff_eq!(got.mean, mean, epsilon = 1e-15);
        assert_abs_diff_eq!(got.sd, sd, epsilon = 1e-15);
        assert_eq!(rep.references, vec!["r1", "r2", "r3"]);
    }

    #[test]
    fn single_rater_rejected() {
        let m = matrix(vec![vec![LabelSet::Filtered]]);
        assert_eq!(cross_annotator_report(&m, None).unwrap_err(), AgreementError::TooFewRaters(1));
    }

    #[test]
    fn csv_has_expected_rows() {
        let m = matrix(vec![vec![fs(&[Frame::GovCrit]); 2], vec![LabelSet::Filtered; 2]]);
        let rep = cross_annotator_report(&m, None).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 10 + 4);
        assert!(text.starts_with("row,p_mean,p_sd,r_mean,r_sd,f1_mean,f1_sd,kappa\nGovCrit.,1.000000"));
    }

    #[test]
    fn from_annotations_complete_only() {
        use crate::corpus::{Annotator, AnnotatorKind};
        let mk = |post: &str, who: &str| Annotation::new(post, Annotator::new(who, AnnotatorKind::Expert), LabelSet::Filtered, 0);
        let anns = vec![mk("p1", "a"), mk("p1", "b"), mk("p2", "a")];
        assert!(RatingMatrix::from_annotations(&anns, false).is_err());
        let m = RatingMatrix::from_annotations(&anns, true).unwrap();
        assert_eq!(m.item_ids(), ["p1".to_string()]);
    }

    fn arb_labelset() -> impl Strategy<Value = LabelSet> {
        prop_oneof![
            1 => Just(LabelSet::Filtered),
            4 => (1u16..512).prop_map(|b| LabelSet::Frames(FrameSet::from_bits(b))),
        ]
    }

    proptest! {
        #[test]
        fn f1_is_symmetric(pairs in proptest::collection::vec((arb_labelset(), arb_labelset()), 1..20)) {
            let a: LabelIndex = pairs.iter().enumerate().map(|(i, p)| (i.to_string(), p.0)).collect();
            let b: LabelIndex = pairs.iter().enumerate().map(|(i, p)| (i.to_string(), p.1)).collect();
            let ab = prf_against_reference(&a, &b).unwrap();
            let ba = prf_against_reference(&b, &a).unwrap();
            for l in Label::ALL {
                prop_assert!((ab.label(l).f1 - ba.label(l).f1).abs() < 1e-12);
            }
            prop_assert!((0.0..=1.0).contains(&ab.micro.f1));
            let macro_check = Label::ALL.iter().map(|l| ab.label(*l).f1).sum::<f64>() / 10.0;
            prop_assert!((ab.macro_.f1 - macro_check).abs() < 1e-12);
        }

        #[test]
        fn kappa_invariant_under_polarity_swap(rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 3), 2..12)) {
            let to_ls = |b: bool| if b { fs(&[Frame::GovCrit]) } else { fs(&[Frame::SolnInt]) };
            let m1 = matrix(rows.iter().map(|r| r.iter().map(|&b| to_ls(b)).collect()).collect());
            let m2 = matrix(rows.iter().map(|r| r.iter().map(|&b| to_ls(!b)).collect()).collect());
            let k1 = fleiss_kappa_binary(&m1, Frame::GovCrit).unwrap();
            let k2 = fleiss_kappa_binary(&m2, Frame::GovCrit).unwrap();
            prop_assert!((k1 - k2).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k1));
        }
    }
}
