//! Cross-validation, coincidence matrices, hyper-parameter search and the
//! model leaderboard.

mod compare;
mod cv;
mod folds;
mod metrics;
mod search;

pub use compare::{compare_models, Leaderboard, LeaderboardRow, RosterEntry};
pub use cv::{cross_validate, cross_validate_with, CvResult};
pub use folds::{make_folds, FoldPlan};
pub use metrics::{coincidence, overall_accuracy, CoincidenceMatrix};
pub use search::{apply_params, search, SearchMode, SearchResult, SearchSpec, Trial};
