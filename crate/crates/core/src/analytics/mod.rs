//! Corpus statistics: n-gram log-odds, state segmentation, frame proportions,
//! time series, regression, t-tests and proportion tests.

mod geo;
mod ngrams;
mod proportions;
mod stats;

use thiserror::Error;

pub use geo::{read_state_tags, state_positions, state_segment, Gazetteer};
pub use ngrams::{
    is_significant, ngram_counts, weighted_log_odds, write_log_odds_csv, LogOddsResult, NgramCounts,
    DEFAULT_ALPHA_TOTAL, PRIOR_EPSILON, Z_CRITICAL,
};
pub use proportions::{
    bucket_key, cooccurrence, frame_cooccurrence, frame_proportions, time_series, Granularity, Normalization,
    ProportionMatrix, TimeSeries,
};
pub use stats::{
    attach_scores, histogram, normal_two_sided_p, ols_fit, scores_by_frame, subset_frame_significance, t_test,
    t_two_sided_p, two_proportion_z, write_histogram_csv, write_proportion_tests_csv, write_regression_csv,
    write_ttest_csv, HistogramBin, ProportionTest, RegressionFit, TTestResult, TTestVariant,
};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("n must be 1 or 2, got {0}")]
    InvalidN(usize),
    #[error("prior has no terms")]
    EmptyPrior,
    #[error("alpha_total must be positive")]
    NonPositiveAlpha,
    #[error("term list is empty")]
    EmptyTermList,
    #[error("x and y differ in length")]
    LengthMismatch,
    #[error("x is constant")]
    DegenerateX,
    #[error("each sample needs at least two values")]
    TooFewSamples,
    #[error("both samples are constant with different means")]
    ZeroVariance,
    #[error("group is empty")]
    EmptyGroup,
    #[error("line {0}: unknown post")]
    UnresolvedPost(usize),
    #[error("line {0}: score outside [0, 1]")]
    ScoreOutOfRange(usize),
    #[error("line {0}: malformed line")]
    MalformedLine(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
