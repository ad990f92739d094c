//! Automatic and human-evaluation metrics.

mod bleu;
mod kappa;
mod ratings;

pub use crate::models::macro_f1;
pub use bleu::{bleu, bleu_with, BleuReport, Smoothing, MAX_ORDER};
pub use kappa::{cohen_kappa, KappaResult};
pub use ratings::{
    aggregate_ratings, rating_pairs, read_ratings, records_per_meme, score_distribution, Histogram, MemeScore, Metric,
    RatingRecord, RatingSummary, ScoreDistribution,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no items to rate")]
    EmptyInput,
    #[error("meme {meme_id} has {count} rating(s), expected 2")]
    IncompleteRatings { meme_id: String, count: usize },
    #[error("meme {meme_id}: {field} score {value} outside 1-4")]
    ScoreOutOfRange {
        meme_id: String,
        field: &'static str,
        value: u8,
    },
    #[error("unknown metric {0:?} (expected coherence, relevance or likes)")]
    UnknownMetric(String),
    #[error("ratings csv: {0}")]
    Csv(#[from] csv::Error),
}
