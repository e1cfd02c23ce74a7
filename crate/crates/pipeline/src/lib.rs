//! Data, training and analysis around the model: planted-signal synthetic
//! data, the step loop with logging and checkpoints, the structured vs
//! free-text targets, and attention-map export.

pub mod attention;
pub mod data;
pub mod error;
pub mod targets;
pub mod train;

pub use attention::{attention_maps, export_attention, load_student, mean_overlap};
pub use data::{
    classify_region, generate_dataset, probe_labels, read_dataset, region, region_mean, write_dataset, Dataset, Sample,
    SyntheticSpec,
};
pub use error::{PipelineError, Result};
pub use targets::{build_example, free_text_target, TargetKind};
pub use train::{
    effective_sampler, next_batch, smoothed_ends, train, TrainOptions, BACKBONE_FILE, CHECKPOINT_FILE, METRICS_FILE,
};
