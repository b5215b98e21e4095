//! Synthetic data, the training loop, evaluation, and the ablation runner.

pub mod ablate;
pub mod dataset;
pub mod eval;
pub mod frechet;
pub mod train;

pub use ablate::{
    ablate, ablate_to, ablation_matrix, threads_from_env, AblationReport, AblationRow,
    AblationTable, AblationVariant,
};
pub use dataset::{generate_dataset, Dataset, DatasetSpec, PatternFamily, Split};
pub use eval::{
    class_histograms, evaluate, evaluate_checkpoint, held_out_metrics, histogram_tv,
    proxy_features, EvalReport, EvalSettings,
};
pub use frechet::{frechet_gaussian, GaussianStats};
pub use train::{log_csv, train, train_on, LogRow, TrainConfig, TrainRun, TrainSettings};
