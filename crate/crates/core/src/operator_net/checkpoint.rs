//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! | field            | encoding                                                        |
//! |------------------|-----------------------------------------------------------------|
//! | magic            | 7 bytes, ASCII `SFCKPT1`                                        |
//! | version          | `u32`, currently 1                                              |
//! | config block     | `u32` × 4: branch_input_dim, trunk_input_dim, width, depth      |
//! | normalisation    | `u32` n_steps, then `f64` × 9: grouting min/max, face min/max, x1 min/max, x2 min/max, settlement scale |
//! | parameters       | per matrix in declaration order: `u32` rows, `u32` cols, rows·cols `f64` row-major |
//!
//! Declaration order is branch encoder, trunk encoder, branch tower (input,
//! gates, output), trunk tower (input, gates, output); weight before bias.
//! The file must end exactly after the last matrix.

use std::fs;
use std::path::Path;

use crate::causal::{NormStats, Range};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

use super::params::{NetConfig, NetParams};

pub const MAGIC: &[u8; 7] = b"SFCKPT1";
pub const FORMAT_VERSION: u32 = 1;

/// Trained network plus the scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub params: NetParams<f64>,
    pub norm: NormStats,
    pub version: u32,
}

impl Checkpoint {
    pub fn new(params: NetParams<f64>, norm: NormStats) -> Self {
        Self { config: params.config(), params, norm, version: FORMAT_VERSION }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128 + 8 * self.params.parameter_count());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.version);
        for v in [
            self.config.branch_input_dim,
            self.config.trunk_input_dim,
            self.config.width,
            self.config.depth,
            self.norm.n_steps,
        ] {
            put_u32(&mut out, v as u32);
        }
        let n = &self.norm;
        for r in [n.grouting, n.face, n.x1, n.x2] {
            put_f64(&mut out, r.min);
            put_f64(&mut out, r.max);
        }
        put_f64(&mut out, n.settlement_scale);
        for m in self.params.matrices() {
            put_u32(&mut out, m.rows() as u32);
            put_u32(&mut out, m.cols() as u32);
            for &v in m.as_slice() {
                put_f64(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(MAGIC.len())? != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
        }
        let version = rd.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::CorruptCheckpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let config = NetConfig {
            branch_input_dim: rd.u32()? as usize,
            trunk_input_dim: rd.u32()? as usize,
            width: rd.u32()? as usize,
            depth: rd.u32()? as usize,
        };
        config.validate().map_err(|e| Error::CorruptCheckpoint(format!("config block: {e}")))?;
        let n_steps = rd.u32()? as usize;
        let mut ranges = [Range::new(0.0, 0.0); 4];
        for r in &mut ranges {
            *r = Range::new(rd.f64()?, rd.f64()?);
        }
        let norm = NormStats {
            n_steps,
            grouting: ranges[0],
            face: ranges[1],
            x1: ranges[2],
            x2: ranges[3],
            settlement_scale: rd.f64()?,
        };

        let mut params = NetParams::zeros(&config)?;
        let names = params.matrix_names();
        for (m, name) in params.matrices_mut().into_iter().zip(names) {
            let (rows, cols) = (rd.u32()? as usize, rd.u32()? as usize);
            if (rows, cols) != m.shape() {
                return Err(Error::CorruptCheckpoint(format!(
                    "shape disagreement in {name}: file has {rows}×{cols}, config implies {}×{}",
                    m.rows(),
                    m.cols()
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(rd.f64()?);
            }
            *m = Matrix::from_vec(rows, cols, data)?;
        }
        if rd.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - rd.pos)));
        }
        Ok(Self { config, params, norm, version })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and insists on a given network shape.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &NetConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if &ckpt.config != expected {
        return Err(Error::CorruptCheckpoint(format!(
            "shape disagreement: file holds {:?}, caller expects {:?}",
            ckpt.config, expected
        )));
    }
    Ok(ckpt)
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("truncated: needed {n} bytes at offset {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
