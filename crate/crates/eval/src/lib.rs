//! Deployment-side evaluation. Depends on the encoder alone: nothing here
//! can see projector or teacher code.

pub mod error;
pub mod metrics;
pub mod probe;

pub use error::{EvalError, Result};
pub use metrics::{auc, f1, macro_auc, macro_f1, MacroMetric};
pub use probe::{cls_features, linear_probe, probe_features, split_indices, Labels, LinearProbe, ProbeConfig, ProbeResult};
