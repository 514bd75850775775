//! Binary checkpoint layout (little-endian throughout):
//!
//! ```text
//! magic    8 bytes  "DPSNNCKP"
//! version  u32
//! width    u8       bytes per stored value: 4 (f32) or 8 (f64)
//! config   u32 x 7  channels, filter_len, stride, bottleneck, hidden,
//!                   context, sample_rate
//!          f64 x 4  plif_theta, alif_b0, alif_beta, norm_eps
//! count    u32      number of tensors
//! tensor   u32 name length, UTF-8 name, u32 rank, u64 x rank dims,
//!          values in row-major order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::layers::{EncoderConfig, SeparatorConfig};
use crate::network::{DpsnnModel, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::Array;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DPSNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Saves `model` at its own precision (32-bit values for `f32` models), so
/// that loading it back at the same type is bit-exact.
pub fn save_checkpoint<T: Scalar>(model: &DpsnnModel<T>, path: &Path) -> Result<()> {
    model.check_shapes()?;
    atomic_write(path, |file| {
        let mut w = BufWriter::new(file);
        write_model(&mut w, model)?;
        w.flush()?;
        Ok(())
    })
}

fn write_model<T: Scalar, W: Write>(w: &mut W, model: &DpsnnModel<T>) -> Result<()> {
    let c = &model.config;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let width = T::BYTES as u8;
    w.write_all(&[width])?;
    for v in [
        c.encoder.channels,
        c.encoder.filter_len,
        c.encoder.stride,
        c.separator.bottleneck,
        c.separator.hidden,
        c.separator.context,
        c.sample_rate as usize,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in [c.plif_theta, c.alif_b0, c.alif_beta, c.norm_eps] {
        w.write_all(&v.to_le_bytes())?;
    }
    let params = model.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, a) in params {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(a.shape().len() as u32).to_le_bytes())?;
        for &d in a.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in a.data() {
            if width == 4 {
                w.write_all(&v.to_f32().expect("f32 conversion").to_le_bytes())?;
            } else {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

struct Input<R> {
    inner: R,
}

impl<R: Read> Input<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Checkpoint(format!("truncated file while reading {what}")),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }
}

/// Loads a checkpoint written by [`save_checkpoint`] at either precision.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<DpsnnModel<T>> {
    let file = File::open(path)?;
    let mut input = Input {
        inner: BufReader::new(file),
    };
    let model = read_model(&mut input)?;
    let mut rest = [0u8; 1];
    if input.inner.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
    }
    Ok(model)
}

fn read_model<T: Scalar, R: Read>(input: &mut Input<R>) -> Result<DpsnnModel<T>> {
    let magic: [u8; 8] = input.bytes("magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a DPSNN checkpoint (bad magic)".into()));
    }
    let version = input.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let [width] = input.bytes::<1>("value width")?;
    if width != 4 && width != 8 {
        return Err(Error::Checkpoint(format!("invalid value width {width}")));
    }
    let mut dims = [0usize; 7];
    for d in dims.iter_mut() {
        *d = input.u32("config")? as usize;
    }
    let [n, l, stride, b, h, k, sr] = dims;
    let config = ModelConfig {
        encoder: EncoderConfig {
            channels: n,
            filter_len: l,
            stride,
        },
        separator: SeparatorConfig {
            bottleneck: b,
            hidden: h,
            context: k,
        },
        sample_rate: sr as u32,
        plif_theta: input.f64("config")?,
        alif_b0: input.f64("config")?,
        alif_beta: input.f64("config")?,
        norm_eps: input.f64("config")?,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid stored configuration: {e}")))?;
    let mut model = DpsnnModel::<T>::init(config, 0)?;
    let count = input.u32("tensor count")? as usize;
    let expected = model.params().len();
    if count != expected {
        return Err(Error::Checkpoint(format!("file holds {count} tensors, model has {expected}")));
    }
    let mut seen = vec![false; expected];
    for _ in 0..count {
        let len = input.u32("tensor name")? as usize;
        if len > 256 {
            return Err(Error::Checkpoint(format!("implausible tensor name length {len}")));
        }
        let mut name = vec![0u8; len];
        input
            .inner
            .read_exact(&mut name)
            .map_err(|_| Error::Checkpoint("truncated file while reading tensor name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let mut slots = model.params_mut();
        let idx = slots
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor name {name:?}")))?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Checkpoint(format!("tensor {name:?} stored twice")));
        }
        let target = &mut slots[idx].1;
        let rank = input.u32("tensor rank")? as usize;
        if rank != target.shape().len() {
            return Err(Error::Checkpoint(format!("tensor {name:?} has rank {rank}, expected {}", target.shape().len())));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(input.u64("tensor shape")? as usize);
        }
        if shape != target.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name:?} has shape {shape:?}, expected {:?}",
                target.shape()
            )));
        }
        let mut data = Vec::with_capacity(target.len());
        for _ in 0..target.len() {
            let v = if width == 4 {
                f32::from_le_bytes(input.bytes("tensor values")?) as f64
            } else {
                input.f64("tensor values")?
            };
            data.push(T::lit(v));
        }
        **target = Array::new(&shape, data)?;
    }
    Ok(model)
}
