//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `SHAASRCK`, `u32` version, `u8` kind
//! (0 SingleHead, 1 SHA), six `u32` config fields, `u32` tensor count, then
//! per tensor a `u32` rank, `u32` dims and `f64` values in declaration order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AcousticModel, ModelConfig, ModelKind};

const MAGIC: &[u8; 8] = b"SHAASRCK";
const VERSION: u32 = 1;

pub fn to_bytes(model: &AcousticModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match model.kind() {
        ModelKind::SingleHead => 0,
        ModelKind::Sha => 1,
    });
    let c = &model.config;
    for v in [
        c.feature_dim,
        c.hidden_dim,
        c.num_shared_blocks,
        c.num_chenones,
        c.split_depth,
        c.lookahead,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, t) in params {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<AcousticModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let kind = match r.take(1, "kind")?[0] {
        0 => ModelKind::SingleHead,
        1 => ModelKind::Sha,
        k => return Err(Error::Checkpoint(format!("unknown model kind {k}"))),
    };
    let config = ModelConfig {
        feature_dim: r.u32("config")?,
        hidden_dim: r.u32("config")?,
        num_shared_blocks: r.u32("config")?,
        num_chenones: r.u32("config")?,
        split_depth: r.u32("config")?,
        lookahead: r.u32("config")?,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("stored config is invalid: {e}")))?;
    // Refuse configurations whose parameters could not fit in the file
    // before allocating anything.
    let needed = expected_scalars(&config, kind).saturating_mul(8);
    if needed > bytes.len() as u128 {
        return Err(Error::Checkpoint("config dimensions exceed the file size".into()));
    }
    let mut model = AcousticModel::zeros(config, kind)?;
    let count = r.u32("tensor count")?;
    let mut params = model.params_mut();
    if count != params.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, {} expected for this configuration",
            params.len()
        )));
    }
    for (i, p) in params.iter_mut().enumerate() {
        let rank = r.u32("rank")?;
        if rank != p.shape().len() {
            return Err(Error::Checkpoint(format!("tensor {i}: rank {rank}, expected {}", p.shape().len())));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")?);
        }
        if shape != p.shape() {
            return Err(Error::Checkpoint(format!("tensor {i}: shape {shape:?}, expected {:?}", p.shape())));
        }
        let raw = r.take(p.len() * 8, "values")?;
        for (dst, c) in p.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
        if !p.is_finite() {
            return Err(Error::Checkpoint(format!("tensor {i} holds non-finite values")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

fn expected_scalars(c: &ModelConfig, kind: ModelKind) -> u128 {
    let (f, h, k) = (c.feature_dim as u128, c.hidden_dim as u128, c.num_chenones as u128);
    let block = h * h + h;
    let shared = (c.num_shared_blocks - c.split_depth) as u128 * block;
    let tower = c.split_depth as u128 * block + h * k + k;
    let (towers, attention) = match kind {
        ModelKind::SingleHead => (1, 0),
        ModelKind::Sha => (2, 3 * h + 2),
    };
    f * h + h + shared + towers * tower + attention
}

pub fn save(model: &AcousticModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<AcousticModel> {
    from_bytes(&fs::read(path)?)
}
