use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use super::AnalyticsError;
use crate::corpus::{Corpus, LabelIndex};
use crate::frame::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Present only when n > 2.
    pub slope_stderr: Option<f64>,
    pub residual_stderr: Option<f64>,
    pub n: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Closed-form simple linear regression of `y` on `x`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionFit, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch);
    }
    let n = x.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewSamples);
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalyticsError::DegenerateX);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    let residual_stderr = (n > 2).then(|| (ss_res / (n - 2) as f64).sqrt());
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        slope_stderr: residual_stderr.map(|s| s / sxx.sqrt()),
        residual_stderr,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    Student,
    #[default]
    Welch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
    pub variant: TTestVariant,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-sided tail probability of Student's t: `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn sample_var(v: &[f64], m: f64) -> f64 {
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Independent-samples t-test. Two constant samples with equal means give t = 0, p = 1.
pub fn t_test(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<TTestResult, AnalyticsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalyticsError::TooFewSamples);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a, ma), sample_var(b, mb));
    let student_df = na + nb - 2.0;
    let result = |t: f64, df: f64| TTestResult {
        t,
        df,
        p_two_sided: t_two_sided_p(t, df),
        variant,
        mean_a: ma,
        mean_b: mb,
        n_a: a.len(),
        n_b: b.len(),
    };
    if va == 0.0 && vb == 0.0 {
        return if ma == mb { Ok(result(0.0, student_df)) } else { Err(AnalyticsError::ZeroVariance) };
    }
    Ok(match variant {
        TTestVariant::Student => {
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / student_df;
            result((ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt(), student_df)
        }
        TTestVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            result((ma - mb) / (qa + qb).sqrt(), df)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub test: String,
    pub frame: Frame,
    pub n1: usize,
    pub n2: usize,
    pub p1: f64,
    pub p2: f64,
    pub z: f64,
    pub p_two_sided: f64,
}

pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Pooled two-proportion z statistic. A pooled share of 0 or 1 forces p1 = p2, so z = 0.
pub fn two_proportion_z(k1: usize, n1: usize, k2: usize, n2: usize) -> Result<(f64, f64), AnalyticsError> {
    if n1 == 0 || n2 == 0 {
        return Err(AnalyticsError::EmptyGroup);
    }
    let (f1, f2) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (f1 + f2);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok((0.0, 1.0));
    }
    let z = (k1 as f64 / f1 - k2 as f64 / f2) / (pooled * (1.0 - pooled) * (1.0 / f1 + 1.0 / f2)).sqrt();
    Ok((z, normal_two_sided_p(z)))
}

/// Compares the share of posts carrying `frame` in a subset against its complement.
pub fn subset_frame_significance(
    subset: &Corpus,
    complement: &Corpus,
    labels: &LabelIndex,
    frame: Frame,
) -> Result<ProportionTest, AnalyticsError> {
    let hits = |c: &Corpus| c.iter().filter(|p| labels.get(&p.id).is_some_and(|l| l.has_frame(frame))).count();
    let (n1, n2) = (subset.len(), complement.len());
    let (k1, k2) = (hits(subset), hits(complement));
    let (z, p) = two_proportion_z(k1, n1, k2, n2)?;
    Ok(ProportionTest {
        test: "two_proportion_z".into(),
        frame,
        n1,
        n2,
        p1: k1 as f64 / n1 as f64,
        p2: k2 as f64 / n2 as f64,
        z,
        p_two_sided: p,
    })
}

/// Stores `post_id \t score_name \t value` rows (values in [0, 1]) in post meta.
/// Returns the number of rows applied; nothing is applied if any row fails.
pub fn attach_scores(corpus: &mut Corpus, path: &Path) -> Result<usize, AnalyticsError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [id, name, value] = parts[..] else { return Err(AnalyticsError::MalformedLine(line_no)) };
        let v: f64 = value.parse().map_err(|_| AnalyticsError::MalformedLine(line_no))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(AnalyticsError::ScoreOutOfRange(line_no));
        }
        if !corpus.contains(id) {
            return Err(AnalyticsError::UnresolvedPost(line_no));
        }
        rows.push((id.to_string(), name.to_string(), value.to_string()));
    }
    for (id, name, value) in &rows {
        corpus.get_mut(id).expect("checked").meta.insert(name.clone(), value.clone());
    }
    Ok(rows.len())
}

/// Score samples for scored posts with and without `frame` in their label.
pub fn scores_by_frame(corpus: &Corpus, labels: &LabelIndex, score: &str, frame: Frame) -> (Vec<f64>, Vec<f64>) {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for p in corpus.iter() {
        let Some(v) = p.meta.get(score).and_then(|s| s.parse::<f64>().ok()) else { continue };
        if labels.get(&p.id).is_some_and(|l| l.has_frame(frame)) {
            with.push(v);
        } else {
            without.push(v);
        }
    }
    (with, without)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Equal-width bins over [0, 1]; the last bin is closed on the right.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin { lo: i as f64 / bins as f64, hi: (i + 1) as f64 / bins as f64, count: 0 })
        .collect();
    for &v in values {
        if (0.0..=1.0).contains(&v) {
            let i = ((v * bins as f64) as usize).min(bins - 1);
            out[i].count += 1;
        }
    }
    out
}

pub fn write_histogram_csv<W: Write>(groups: &[(&str, Vec<HistogramBin>)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "lo", "hi", "count"])?;
    for (g, bins) in groups {
        for b in bins {
            w.write_record([g.to_string(), b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_regression_csv<W: Write>(rows: &[(&str, RegressionFit)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "slope", "intercept", "r_squared", "slope_stderr", "residual_stderr", "n"])?;
    for (name, f) in rows {
        w.write_record([
            name.to_string(),
            f.slope.to_string(),
            f.intercept.to_string(),
            f.r_squared.to_string(),
            opt(f.slope_stderr),
            opt(f.residual_stderr),
            f.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ttest_csv<W: Write>(rows: &[(&str, TTestResult)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "variant", "t", "df", "p_two_sided", "mean_a", "mean_b", "n_a", "n_b"])?;
    for (name, r) in rows {
        let variant = match r.variant {
            TTestVariant::Student => "student",
            TTestVariant::Welch => "welch",
        };
        w.write_record([
            name.to_string(),
            variant.to_string(),
            r.t.to_string(),
            r.df.to_string(),
            r.p_two_sided.to_string(),
            r.mean_a.to_string(),
            r.mean_b.to_string(),
            r.n_a.to_string(),
            r.n_b.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_proportion_tests_csv<W: Write>(rows: &[ProportionTest], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["test", "frame", "n1", "n2", "p1", "p2", "z", "p_two_sided"])?;
    for r in rows {
        w.write_record([
            r.test.clone(),
            r.frame.canonical_name().to_string(),
            r.n1.to_string(),
            r.n2.to_string(),
            r.p1.to_string(),
            r.p2.to_string(),
            r.z.to_string(),
            r.p_two_sided.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
