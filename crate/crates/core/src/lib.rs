//! Labeling-free ranking of classification models.
//!
//! Given only the labels `n` models predict on `m` unlabeled samples, infer
//! how good each model is and rank them, plus the baselines, metrics and
//! synthetic data needed to evaluate such rankings.

pub mod baselines;
pub mod experiment;
pub mod laf;
pub mod matrix;
pub mod metrics;
pub mod numeric;
pub mod ranking;
pub mod synth;

pub use baselines::{random_rank, sds_rank, BudgetPlan};
pub use experiment::{run_eval, EvalConfig, EvalReport, Method};
pub use laf::{run_laf, LafConfig, LafOutcome, LafParams, PosteriorTable, Prior};
pub use matrix::{prune, GroundTruth, MatrixError, PredictionMatrix, PrunedMatrix};
pub use metrics::{ground_truth_ranking, kendall, spearman, RankPair};
pub use ranking::{rank_from_scores, RankEntry, Ranking, RankingReport};
pub use synth::{generate, realized_accuracy, SynthSpec};
