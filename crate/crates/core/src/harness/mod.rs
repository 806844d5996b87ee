//! Training orchestration: configs, the progressive training loop,
//! evaluation, metrics logs, checkpoints and variant comparisons.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod eval;
pub mod log;
pub mod train;

pub use checkpoint::Checkpoint;
pub use compare::{compare_variants, Comparison, RunSummary, VariantRow};
pub use config::{DataSource, TrainConfig, Variant};
pub use eval::{confusion_degree, evaluate, EvalReport};
pub use log::{EpochRecord, IterationRecord, LogLine, Phase};
pub use train::{train, train_on, TrainOutcome};
