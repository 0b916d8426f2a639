//! End-to-end completion, classification, evaluation and the file-backed
//! stages driven by the command-line tool.

mod classifier;
mod completion;
mod config;
mod dataset;
mod evaluate;
pub mod stages;

pub use classifier::{
    evaluate_accuracy, softmax_cross_entropy, train_classifier, Classifier, ClassifierConfig,
};
pub use completion::{select_path, CompletionMode, CompletionResult, PathTaken, Pipeline};
pub use config::{parse_ratios, RunConfig};
pub use dataset::{Dataset, LabeledCloud};
pub use evaluate::{
    bench_latency, decode_generated, evaluate_completion, jitter_cloud, make_partial,
    nearest_shape_distance, nearest_shape_threshold, write_csv, write_json, EvalOptions, EvalRow,
    LatencyStats,
};
