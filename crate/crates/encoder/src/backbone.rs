use std::path::Path;

use vivid_numerics::Tensor;

use crate::container::Container;
use crate::error::{EncoderError, Result};
use crate::vit::{VitConfig, VitEncoder};

/// Namespace of encoder tensors in every container.
pub const VIT_PREFIX: &str = "vit.";

/// A deployable encoder loaded from an exported backbone file.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub encoder: VitEncoder,
}

fn vit_config(c: &Container) -> Result<VitConfig> {
    let v = c
        .config
        .get("vit")
        .ok_or_else(|| EncoderError::Config("container config has no \"vit\" section".into()))?;
    let cfg: VitConfig = serde_json::from_value(v.clone()).map_err(|e| EncoderError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl Backbone {
    /// Accepts only backbone containers holding nothing but `vit.*` tensors.
    pub fn from_container(c: Container) -> Result<Self> {
        if !c.backbone {
            return Err(EncoderError::Deployment(
                "not an exported backbone (full checkpoints must go through export first)".into(),
            ));
        }
        if let Some((name, _)) = c.tensors.iter().find(|(n, _)| !n.starts_with(VIT_PREFIX)) {
            return Err(EncoderError::Deployment(format!("foreign tensor {name:?} in backbone")));
        }
        let cfg = vit_config(&c)?;
        Ok(Self {
            encoder: VitEncoder::from_params(cfg, c.tensors)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::read(path)?)
    }

    pub fn encode(&self, image: &Tensor) -> Result<Tensor> {
        self.encoder.encode(image)
    }

    pub fn to_container(&self) -> Container {
        Container {
            backbone: true,
            step: 0,
            config: serde_json::json!({ "vit": self.encoder.config() }),
            rng: None,
            tensors: self.encoder.params().entries().to_vec(),
        }
    }
}

/// Strip a full checkpoint down to the encoder: keeps `vit.*` tensors and the
/// `vit` config section, drops everything else including optimizer state.
pub fn export_backbone(full: &Container) -> Result<Container> {
    let cfg = vit_config(full)?;
    let tensors = full.with_prefix(VIT_PREFIX);
    // validates names/shapes against the config
    VitEncoder::from_params(cfg.clone(), tensors.clone())?;
    Ok(Container {
        backbone: true,
        step: full.step,
        config: serde_json::json!({ "vit": cfg }),
        rng: None,
        tensors,
    })
}
