//! Optimisation, evaluation metrics, correlation analysis and ablations.

pub mod ablation;
pub mod adam;
pub mod correlation;
pub mod metrics;
pub mod trainer;

pub use ablation::{ablate, AblationData, AblationReport, AblationRow, SeedResult, Variant};
pub use adam::Adam;
pub use correlation::{correlate_features, correlations_csv, FeatureCorrelation};
pub use metrics::{average_ranks, mae, mse, pearson, spearman, Metrics};
pub use trainer::{
    evaluate, predict_all, train, train_datasets, train_with_schedule, EpochRecord, History,
    TrainConfig, TrainOutcome,
};
