//! The vision encoder and everything needed to run it on its own: the model,
//! the on-disk tensor container, and the backbone loader that refuses files
//! carrying anything besides encoder weights.

pub mod backbone;
pub mod container;
pub mod error;
pub mod vit;

pub use backbone::{export_backbone, Backbone, VIT_PREFIX};
pub use container::{Container, RngState, FORMAT_VERSION, MAGIC};
pub use error::{EncoderError, Result};
pub use vit::{patchify, VitConfig, VitEncoder};
