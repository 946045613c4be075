//! Dataset splitting, frame-based TNR/TPR and the ablation harness.

mod ablation;
mod dataset;
mod metrics;

pub use ablation::{run_ablation, run_modes, run_table, train_for_mode, AblationMode, AblationRun, Datasets};
pub use dataset::{
    block_input, partition_sizes, split_dataset, ClipEntry, DatasetManifest, Representation, Sample, SplitSpec,
    SyntheticDataset,
};
pub use metrics::{evaluate, format_table, Accounting, ConfusionCounts, FnScorer, MetricsRow, Scorer};
