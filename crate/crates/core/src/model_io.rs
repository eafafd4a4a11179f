//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "HARMODEL"
//! version      u32
//! body_len     u64      bytes between this field and the checksum
//! body:
//!   scalar tag   u32 len + utf8 ("f64" / "f32")
//!   config       u32 len + JSON
//!   columns      u32 count + u8 per column
//!   history      u32 count + (f64 loss, f64 accuracy) per epoch
//!   tensors      u32 count + per tensor:
//!                  u32 name len + utf8, u32 rank, u64 per dim, f64 payload
//! checksum     32 bytes SHA-256 over everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dataset::ColumnSet;
use crate::error::{HarError, Result};
use crate::model::{build, EpochStats, NetworkConfig, TrainedModel};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"HARMODEL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(buf: &mut Vec<u8>, b: &[u8]) {
    put_u32(buf, b.len() as u32);
    buf.extend_from_slice(b);
}

pub fn to_bytes<S: Scalar>(model: &TrainedModel<S>) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    put_bytes(&mut body, S::TAG.as_bytes());
    let config = serde_json::to_vec(&model.config)
        .map_err(|e| HarError::ModelFormat(format!("config serialization: {e}")))?;
    put_bytes(&mut body, &config);
    let cols = model.config.columns.as_slice();
    put_u32(&mut body, cols.len() as u32);
    body.extend(cols.iter().map(|&c| c as u8));
    put_u32(&mut body, model.history.len() as u32);
    for h in &model.history {
        body.extend_from_slice(&h.loss.to_le_bytes());
        body.extend_from_slice(&h.accuracy.to_le_bytes());
    }
    let state = model.network.named_state();
    put_u32(&mut body, state.len() as u32);
    for (name, t) in state {
        put_bytes(&mut body, name.as_bytes());
        put_u32(&mut body, t.shape().len() as u32);
        for &d in t.shape() {
            body.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            body.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + CHECKSUM_LEN);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(HarError::ModelFormat("truncated body".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| HarError::ModelFormat("invalid utf-8 string".into()))
    }
}

pub fn from_bytes<S: Scalar>(bytes: &[u8]) -> Result<TrainedModel<S>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(HarError::ModelFormat("not a model file (bad magic)".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(HarError::ModelFormat("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(HarError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let body_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected_len = HEADER_LEN.saturating_add(body_len).saturating_add(CHECKSUM_LEN);
    if bytes.len() < expected_len {
        return Err(HarError::ModelFormat(format!(
            "truncated file: {} of {expected_len} bytes",
            bytes.len()
        )));
    }
    if bytes.len() > expected_len {
        return Err(HarError::ModelFormat("trailing bytes after checksum".into()));
    }
    let (content, checksum) = bytes.split_at(HEADER_LEN + body_len);
    if Sha256::digest(content).as_slice() != checksum {
        return Err(HarError::Checksum);
    }

    let mut r = Reader {
        buf: &content[HEADER_LEN..],
        pos: 0,
    };
    let tag = r.string()?;
    if tag != S::TAG {
        return Err(HarError::ModelFormat(format!(
            "model stores {tag} parameters, requested {}",
            S::TAG
        )));
    }
    let config: NetworkConfig = serde_json::from_slice(r.bytes()?)
        .map_err(|e| HarError::ModelFormat(format!("config block: {e}")))?;
    let ncols = r.u32()? as usize;
    let cols: Vec<usize> = r.take(ncols)?.iter().map(|&c| c as usize).collect();
    let cols = ColumnSet::new(cols)?;
    if cols != config.columns {
        return Err(HarError::ModelFormat("column subset disagrees with config".into()));
    }
    let nhist = r.u32()? as usize;
    let mut history = Vec::with_capacity(nhist);
    for epoch in 0..nhist {
        let loss = r.f64()?;
        let accuracy = r.f64()?;
        history.push(EpochStats { epoch, loss, accuracy });
    }
    let ntensors = r.u32()? as usize;
    let mut state = Vec::with_capacity(ntensors);
    for _ in 0..ntensors {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64().map(S::of)).collect::<Result<Vec<_>>>()?;
        state.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != r.buf.len() {
        return Err(HarError::ModelFormat("unexpected bytes after tensors".into()));
    }

    let mut network = build::<S>(&config)?;
    network.load_state(state)?;
    if let Some(name) = network.first_non_finite() {
        return Err(HarError::ModelFormat(format!("non-finite values in {name}")));
    }
    Ok(TrainedModel {
        config,
        network,
        history,
    })
}

pub fn save_model<S: Scalar>(model: &TrainedModel<S>, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    fs::write(path, bytes).map_err(|e| HarError::io(path, e))
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<TrainedModel<S>> {
    if !path.is_file() {
        return Err(HarError::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| HarError::io(path, e))?;
    from_bytes(&bytes)
}
