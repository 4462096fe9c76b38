//! Need prevalence over waves and subgroups, sentiment trajectories and
//! insight reports.

mod prevalence;
mod report;
mod score;
mod sentiment;

pub use prevalence::{
    count_needs, prevalence, prevalence_series, stratified_prevalence, CountTable, Dimension, NeedCount,
    PrevalenceSeries, StratifiedPrevalence, StratumCell,
};
pub use report::{
    build_report, dashboard, find_disparities, render_markdown, Dashboard, Disparity, InsightReport, Narrative,
    NarrativeSource, PrevalencePoint, ReportConfig, ReportInputs, ReportMetadata, SentimentPointSummary, StratumPoint,
    TopNeed, WaveSummary, DASHBOARD_VERSION, DEFAULT_DISPARITY_THRESHOLD, REPORT_VERSION,
};
pub use score::{argmax, fallback_scores, normalize, score_documents, score_needs, NeedScores};
pub use sentiment::{
    sentiment, sentiment_trajectory, sentiment_with, RemoteSentiment, SentimentClass, SentimentPoint, SentimentScorer,
    SentimentSummary, ValenceLexicon, CLASS_THRESHOLD, NEGATION_WINDOW,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no scored documents in window")]
    NoScoredDocuments,
    #[error("unknown dimension `{0}` (expected age_band, gender, imd_band or imd_decile)")]
    UnknownDimension(String),
    #[error("document user `{0}` has no demographic record")]
    UnknownUser(String),
    #[error("no analyzed waves to report on")]
    NoWaves,
}
