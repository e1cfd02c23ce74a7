//! Binary tensor container.
//!
//! ```text
//! "VIVD" | u32 version | u64 header_len | header JSON | f64 LE payload
//! ```
//!
//! The header lists each tensor's name, shape, dtype and byte offset into the
//! payload, plus the run config, RNG state and step counter. Tensors are laid
//! out back to back in header order.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vivid_numerics::Tensor;

use crate::error::{EncoderError, Result};

pub const MAGIC: &[u8; 4] = b"VIVD";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

/// Resumable position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// `u128` word position, as decimal text (JSON numbers stop at 2^53).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| EncoderError::Format(format!("bad rng word_pos {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    backbone: bool,
    step: u64,
    config: serde_json::Value,
    rng: Option<RngState>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    /// Set on exported encoder-only files.
    pub backbone: bool,
    pub step: u64,
    pub config: serde_json::Value,
    pub rng: Option<RngState>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
                offset,
            });
            offset += 8 * t.numel() as u64;
        }
        let header = Header {
            backbone: self.backbone,
            step: self.step,
            config: self.config.clone(),
            rng: self.rng.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).expect("header is plain data");
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parse and fully validate; nothing is returned unless every tensor is
    /// present and the payload length matches exactly.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: String| EncoderError::Format(m);
        if bytes.len() < PREAMBLE {
            return Err(fmt(format!("file is {} bytes, shorter than the preamble", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(fmt(format!("unsupported version {version}, expected {FORMAT_VERSION}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let hend = usize::try_from(hlen)
            .ok()
            .and_then(|h| PREAMBLE.checked_add(h))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fmt(format!("header length {hlen} runs past end of file (truncated?)")))?;
        let header: Header =
            serde_json::from_slice(&bytes[PREAMBLE..hend]).map_err(|e| fmt(format!("header: {e}")))?;
        let payload = &bytes[hend..];

        let mut expected_offset = 0u64;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            if e.dtype != "f64" {
                return Err(fmt(format!("tensor {}: unsupported dtype {}", e.name, e.dtype)));
            }
            if e.offset != expected_offset {
                return Err(fmt(format!("tensor {}: offset {} is not contiguous", e.name, e.offset)));
            }
            let numel = e
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| fmt(format!("tensor {}: shape overflows", e.name)))?;
            let start = e.offset as usize;
            let end = start + 8 * numel;
            if end > payload.len() {
                return Err(fmt(format!(
                    "tensor {} needs payload bytes {start}..{end}, file has {} (truncated)",
                    e.name,
                    payload.len()
                )));
            }
            let data = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(e.shape.clone(), data).map_err(|err| fmt(format!("tensor {}: {err}", e.name)))?;
            tensors.push((e.name.clone(), t));
            expected_offset = end as u64;
        }
        if expected_offset as usize != payload.len() {
            return Err(fmt(format!(
                "payload has {} trailing bytes",
                payload.len() - expected_offset as usize
            )));
        }
        Ok(Self {
            backbone: header.backbone,
            step: header.step,
            config: header.config,
            rng: header.rng,
            tensors,
        })
    }

    /// Write via a temp file in the same directory and rename into place.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Tensors whose name starts with `prefix`, in stored order.
    pub fn with_prefix(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.tensors
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .cloned()
            .collect()
    }
}

/// Temp file + rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
