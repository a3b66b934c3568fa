//! Desk-scale training and evaluation.

pub mod data;
pub mod metrics;
pub mod model;
pub mod run;
pub mod simulate;

pub use data::{generate_shapes, read_cifar_batch, Dataset, LabeledShapes, ShapesConfig, SHAPE_CLASSES};
pub use metrics::{
    accuracy, calibration_error, calibration_from_predictions, fgsm_attack, fgsm_error, soft_ce,
    CalibrationFlavor, MeanCi, SoftCe, PROB_FLOOR,
};
pub use model::{Activation, Mlp, Sgd};
pub use run::{
    evaluate, grid_search_smoothing, heldout_objective, run_comparison, train, train_seed,
    ComparisonReport, ComparisonRow, EvalOptions, GridPoint, GridSearch, MixedExample, MixupMode,
    RandomLabelMode, RowSpec, SeedMetrics, TrainConfig, TrainData, TrainedModel,
};
pub use simulate::{build_benchmark, pair_truths, simulate_judgments, Benchmark, BenchmarkConfig, RaterConfig};
