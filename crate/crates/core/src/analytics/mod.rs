//! Crowd baselines and the statistics used to compare them with group
//! decisions.

mod report;
mod stats;
mod woc;

use thiserror::Error;

use crate::model::OptionId;

pub use report::{
    build_report, pairwise_selection_comparison, AnalyticsReport, PairwiseComparison,
    ReportOptions, ReportSummary, SessionDataset, SessionReport,
};
pub use stats::{
    bootstrap_percentile_ci, contribution_metrics, median_individual, paired_t_test,
    percentile_outperformed, sign_test_p, ContributionMetrics, Sides, TTest,
};
pub use woc::{
    score_roster, score_survey, validate_survey, woc_roster, PointsTable, SurveyResponse,
    WocOutcome,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("no data")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("invalid survey from `{participant}`: {reason}")]
    InvalidSurvey { participant: String, reason: String },
    #[error("no points recorded for `{0}`")]
    MissingPoints(OptionId),
    #[error("budget repair ran out of cheaper options")]
    RepairExhausted,
    #[error("session `{session}`: {source}")]
    Session {
        session: String,
        #[source]
        source: Box<AnalyticsError>,
    },
}
