//! Training-side model: the frozen teacher decoder, the combined objective
//! over encoder + projector + teacher, AdamW with a warmup/cosine schedule,
//! and resumable checkpoints.

pub mod config;
pub mod error;
pub mod objective;
pub mod optim;
pub mod state;
pub mod teacher;

pub use config::{OptimConfig, RunConfig};
pub use error::{ModelError, Result};
pub use objective::{instruction_ids, loss_gradcheck, Example, LossOutput, LossVars, Model, INSTRUCTION_PREFIX};
pub use optim::{AdamState, AdamW};
pub use vivid_numerics::optim::{adamw_update, lr_factor, warmup_steps, AdamHyper};
pub use state::{StepMetrics, TrainState, OPTIM_PREFIX};
pub use teacher::{TeacherConfig, TeacherLayout, TeacherStub, TEACHER_PREFIX};
pub use vivid_encoder::export_backbone;
