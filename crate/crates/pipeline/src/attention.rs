use std::path::{Path, PathBuf};

use rayon::prelude::*;
use vivid_encoder::{Container, VitEncoder, VIT_PREFIX};
use vivid_model::RunConfig;
use vivid_numerics::Tensor;
use vivid_spd::{pairwise_overlap, SpdProjector, SPD_PREFIX};

use crate::error::{PipelineError, Result};

/// Encoder and projector restored from a full checkpoint.
pub fn load_student(c: &Container) -> Result<(VitEncoder, SpdProjector)> {
    if c.backbone || c.with_prefix(SPD_PREFIX).is_empty() {
        return Err(PipelineError::Usage(
            "attention export needs a full checkpoint; this file has no projector".into(),
        ));
    }
    let cfg: RunConfig =
        serde_json::from_value(c.config.clone()).map_err(|e| PipelineError::Format(e.to_string()))?;
    let vit = VitEncoder::from_params(cfg.vit, c.with_prefix(VIT_PREFIX))?;
    let spd = SpdProjector::from_params(cfg.spd, c.with_prefix(SPD_PREFIX))?;
    Ok((vit, spd))
}

/// Head-averaged `[M × L]` map of every group.
pub fn attention_maps(vit: &VitEncoder, spd: &SpdProjector, image: &Tensor) -> Result<Vec<Tensor>> {
    Ok(spd.run(&vit.encode(image)?)?.maps)
}

/// Mean over images of the summed pairwise overlap between group maps.
pub fn mean_overlap(vit: &VitEncoder, spd: &SpdProjector, images: &[Tensor]) -> Result<f64> {
    if images.is_empty() {
        return Err(PipelineError::Usage("no images".into()));
    }
    let per: Vec<f64> = images
        .par_iter()
        .map(|img| Ok(pairwise_overlap(&attention_maps(vit, spd, img)?)))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

const PGM_SCALE: usize = 8;

/// Patch maps of one group (CLS dropped), side by side, upscaled and scaled
/// to the group maximum.
fn pgm(map: &Tensor, grid: usize) -> Vec<u8> {
    let (m, l) = (map.shape()[0], map.shape()[1]);
    debug_assert_eq!(l, grid * grid + 1);
    let max = (0..m)
        .flat_map(|q| map.row(q)[1..].to_vec())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let (w, h) = (m * grid * PGM_SCALE, grid * PGM_SCALE);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            let q = x / (grid * PGM_SCALE);
            let gc = (x % (grid * PGM_SCALE)) / PGM_SCALE;
            let gr = y / PGM_SCALE;
            let v = map.row(q)[1 + gr * grid + gc] / max;
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

fn csv(map: &Tensor) -> String {
    let mut s = String::new();
    for q in 0..map.shape()[0] {
        let row: Vec<String> = map.row(q).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// For each image and group: `img<i>_group<g>.csv` (full `M × L` map, CLS
/// column first) and `img<i>_group<g>.pgm` (patch grid).
pub fn export_attention(c: &Container, images: &[Tensor], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (vit, spd) = load_student(c)?;
    std::fs::create_dir_all(out_dir)?;
    let grid = vit.config().grid();
    let mut written = Vec::new();
    for (i, img) in images.iter().enumerate() {
        for (g, map) in attention_maps(&vit, &spd, img)?.iter().enumerate() {
            let stem = out_dir.join(format!("img{i:04}_group{g}"));
            let (c_path, p_path) = (stem.with_extension("csv"), stem.with_extension("pgm"));
            vivid_encoder::container::write_atomic(&c_path, csv(map).as_bytes())?;
            vivid_encoder::container::write_atomic(&p_path, &pgm(map, grid))?;
            written.push(c_path);
            written.push(p_path);
        }
    }
    Ok(written)
}
