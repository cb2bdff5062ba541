//! Metrics, the two-fold protocol and the synthetic self-test.

pub mod metrics;
pub mod protocol;
pub mod synthetic;

pub use metrics::{average_precision, confusion_matrix, mean_average_precision, ConfusionMatrix};
pub use protocol::{run_table, run_two_fold, EvalReport, FoldSpec, TableReport};
pub use synthetic::run_synthetic_selftest;
