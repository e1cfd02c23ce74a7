use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vivid_numerics::nn::{Bound, LayerNorm, Linear, ParamId, ParamSet, TransformerBlock};
use vivid_numerics::{Tape, Tensor, Var};

use crate::error::{EncoderError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub init_std: f64,
}

impl Default for VitConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            dim: 32,
            depth: 2,
            heads: 4,
            mlp_ratio: 4,
            init_std: 0.02,
        }
    }
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EncoderError::Config(m));
        if self.image_size == 0 || self.patch_size == 0 || self.dim == 0 || self.heads == 0 || self.mlp_ratio == 0
        {
            return bad("sizes must be positive".into());
        }
        if self.image_size % self.patch_size != 0 {
            return bad(format!(
                "patch_size {} does not divide image_size {}",
                self.patch_size, self.image_size
            ));
        }
        if self.dim % self.heads != 0 {
            return bad(format!("heads {} do not divide dim {}", self.heads, self.dim));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        Ok(())
    }

    /// Patches per side.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// CLS plus one token per patch.
    pub fn num_tokens(&self) -> usize {
        1 + self.num_patches()
    }
}

/// Cut a square image into non-overlapping patches, row-major over the
/// grid, each flattened row-major: `[num_patches × patch_size²]`.
pub fn patchify(image: &Tensor, cfg: &VitConfig) -> Result<Tensor> {
    let s = cfg.image_size;
    if image.shape() != [s, s] {
        return Err(EncoderError::ImageShape {
            expected: s,
            got: image.shape().to_vec(),
        });
    }
    if let Some((index, &value)) = image
        .data()
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(EncoderError::PixelRange { index, value });
    }
    let (p, g) = (cfg.patch_size, cfg.grid());
    let px = image.data();
    let mut out = Vec::with_capacity(s * s);
    for gr in 0..g {
        for gc in 0..g {
            for r in 0..p {
                let start = (gr * p + r) * s + gc * p;
                out.extend_from_slice(&px[start..start + p]);
            }
        }
    }
    Ok(Tensor::new(vec![g * g, p * p], out)?)
}

#[derive(Clone, Debug)]
struct Layout {
    patch: Linear,
    cls: ParamId,
    pos: ParamId,
    blocks: Vec<TransformerBlock>,
    norm: LayerNorm,
}

/// Pre-norm ViT over grayscale images. Output rows: CLS first, then patches
/// in grid order, after a final layer norm.
#[derive(Clone, Debug)]
pub struct VitEncoder {
    cfg: VitConfig,
    params: ParamSet,
    layout: Layout,
}

impl VitEncoder {
    pub fn new<R: Rng + ?Sized>(cfg: VitConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let d = cfg.dim;
        let std = cfg.init_std;
        let patch = Linear::new(&mut params, "vit.patch_embed", cfg.patch_size * cfg.patch_size, d, std, rng);
        let cls = params.push("vit.cls", Tensor::randn(&[1, d], std, rng));
        let pos = params.push("vit.pos", Tensor::randn(&[cfg.num_tokens(), d], std, rng));
        let blocks = (0..cfg.depth)
            .map(|i| TransformerBlock::new(&mut params, &format!("vit.blocks.{i}"), d, cfg.heads, cfg.mlp_ratio, std, rng))
            .collect();
        let norm = LayerNorm::new(&mut params, "vit.norm", d);
        Ok(Self {
            cfg,
            params,
            layout: Layout {
                patch,
                cls,
                pos,
                blocks,
                norm,
            },
        })
    }

    /// Rebuild from stored tensors; names and shapes must match `cfg`.
    pub fn from_params(cfg: VitConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut enc = Self::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
        enc.params.assign(tensors)?;
        Ok(enc)
    }

    pub fn config(&self) -> &VitConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Record the forward pass on `tape`, using parameters bound via
    /// `self.params().bind(..)`. Returns `[num_tokens × dim]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, image: &Tensor) -> Result<Var> {
        let patches = tape.constant(patchify(image, &self.cfg)?);
        let l = &self.layout;
        let emb = l.patch.forward(tape, p, patches)?;
        let mut x = tape.concat_rows(&[p.var(l.cls), emb])?;
        x = tape.add(x, p.var(l.pos))?;
        for b in &l.blocks {
            x = b.forward(tape, p, x, None)?;
        }
        Ok(l.norm.forward(tape, p, x)?)
    }

    /// Forward without gradients.
    pub fn encode(&self, image: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let x = self.forward(&mut tape, &p, image)?;
        Ok(tape.value(x).clone())
    }

    /// CLS row of [`VitEncoder::encode`].
    pub fn cls_embedding(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.encode(image)?.row(0).to_vec())
    }
}
