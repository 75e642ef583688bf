//! Model checkpoint container.
//!
//! Layout:
//!
//! ```text
//! GDEN1\n
//! {"task":"semi","layer_dims":[1433,16,7],"kind":"nl","alpha":0.65,
//!  "variant":"paper","head_diffusion":true,"seed":0}\n
//! <weights: every matrix in order, row-major, f64 little-endian>
//! ```
//!
//! The header is a single line of JSON. The payload holds exactly
//! `sum(d_k * d_{k+1})` values, nothing follows it.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::diffusion::{DiffusionKind, Variant};
use crate::error::{GdenError, Result};

const MAGIC: &[u8] = b"GDEN1\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Semi,
    Gae,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub task: Task,
    pub params: ModelParams,
    pub kind: DiffusionKind,
    pub alpha: f64,
    pub variant: Variant,
    pub head_diffusion: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    task: Task,
    layer_dims: Vec<usize>,
    kind: String,
    alpha: f64,
    variant: String,
    head_diffusion: bool,
    seed: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.validate()?;
        let header = Header {
            task: self.task,
            layer_dims: self.params.layer_dims.clone(),
            kind: self.kind.short_name().to_string(),
            alpha: self.alpha,
            variant: self.variant.name().to_string(),
            head_diffusion: self.head_diffusion,
            seed: self.params.seed,
        };
        let mut out = MAGIC.to_vec();
        serde_json::to_writer(&mut out, &header)
            .map_err(|e| GdenError::Checkpoint(e.to_string()))?;
        out.push(b'\n');
        for w in &self.params.weights {
            for v in w.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| GdenError::Checkpoint("missing GDEN1 header".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| GdenError::Checkpoint("unterminated header".into()))?;
        let header: Header = serde_json::from_slice(&rest[..nl])
            .map_err(|e| GdenError::Checkpoint(format!("bad header: {e}")))?;
        let payload = &rest[nl + 1..];

        let dims = &header.layer_dims;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(GdenError::Checkpoint(format!("bad layer dims {dims:?}")));
        }
        let expected: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
        if payload.len() != expected * 8 {
            return Err(GdenError::Checkpoint(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                expected * 8
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let weights = dims
            .windows(2)
            .map(|w| Array2::from_shape_fn((w[0], w[1]), |_| values.next().expect("sized")))
            .collect();
        let params = ModelParams {
            layer_dims: header.layer_dims.clone(),
            weights,
            seed: header.seed,
        };
        params.validate()?;
        Ok(Self {
            task: header.task,
            params,
            kind: header.kind.parse()?,
            alpha: header.alpha,
            variant: header.variant.parse()?,
            head_diffusion: header.head_diffusion,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(GdenError::MissingFile(path.to_path_buf()));
    }
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            task: Task::Semi,
            params: ModelParams::init(&[5, 3, 2], 17).unwrap(),
            kind: DiffusionKind::NormalizedLaplacian,
            alpha: 0.65,
            variant: Variant::Paper,
            head_diffusion: true,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert!(bytes.starts_with(b"GDEN1\n"));
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&sample(), &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), sample());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"GDEN2\n{}\n").is_err());
        assert!(matches!(
            load_checkpoint(Path::new("/nonexistent/model.bin")),
            Err(GdenError::MissingFile(_))
        ));
    }
}
