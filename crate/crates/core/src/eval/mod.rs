//! Ranking evaluation: candidate pools, Precision@1, classifier accuracy,
//! accuracy/precision correlation and ablation tables.

mod ablation;
mod metrics;
mod pools;
mod report;

pub use ablation::{ablation_sweep, AblationCell, AblationGrid, AblationTable};
pub use metrics::{
    accuracy_from_scores, accuracy_precision_correlation, classifier_accuracy, count_wins, is_win, pearson,
    pool_scores, precision_at_1, precision_from_scores, MIN_CORRELATION_POINTS,
};
pub use pools::{build_pools, encode_pools, load_pools, save_pools, EncodedPool, RankingPool};
pub use report::{EvalReport, SeriesPoint};
