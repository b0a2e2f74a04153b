//! Binary checkpoint format (little-endian):
//!
//! ```text
//! magic "RSB1" | version u32 = 1 | config (u32 len + UTF-8) | tensor count u32
//! per tensor: name (u32 len + UTF-8) | dtype u8 | rank u8 | dims u32 × rank | values
//! ```
//!
//! dtype 0 stores f32 values, dtype 1 stores f64. Running statistics are
//! stored under their `.running_mean` / `.running_var` names. Two rank-0
//! tensors, `meta.bn_eps` and `meta.bn_momentum`, record the norm
//! hyperparameters.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ModelSpec, Network};
use crate::error::{Error, Result};
use crate::nn::{Mode, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RSB1";
const VERSION: u32 = 1;
const META_EPS: &str = "meta.bn_eps";
const META_MOMENTUM: &str = "meta.bn_momentum";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    /// Lossless; reloaded networks reproduce predictions bit for bit.
    #[default]
    F64,
}

impl Precision {
    fn tag(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F64 => 1,
        }
    }
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    save_checkpoint_with(net, path, Precision::default())
}

pub fn save_checkpoint_with(net: &Network, path: &Path, precision: Precision) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut buf, &net.spec().to_string());

    let eps = Tensor::scalar(net.bn_eps());
    let momentum = Tensor::scalar(net.bn_momentum());
    let tensors: Vec<(&str, &Tensor)> =
        net.params().iter().chain(net.buffers().iter()).chain([(META_EPS, &eps), (META_MOMENTUM, &momentum)]).collect();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        put_str(&mut buf, name);
        buf.push(precision.tag());
        buf.push(t.rank() as u8);
        for &d in t.dims() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match precision {
            Precision::F32 => t.data().iter().for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes())),
            Precision::F64 => t.data().iter().for_each(|&v| buf.extend_from_slice(&v.to_le_bytes())),
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file: needed {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
    }
}

/// Load a checkpoint into a freshly built network, in eval mode.
pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Format("file too short for magic".into()))? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic, not an RSB1 checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let spec = ModelSpec::parse(&r.string()?)?;
    let mut net = Network::new(&spec, 0)?;
    let (mut eps, mut momentum) = (net.bn_eps(), net.bn_momentum());

    let count = r.u32()? as usize;
    let expected = net.params().len() + net.buffers().len();
    let mut seen = 0;
    for _ in 0..count {
        let name = r.string()?;
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let values: Vec<f64> = match dtype {
            0 => r.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            1 => r.take(8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            t => return Err(Error::Format(format!("unknown dtype tag {t} for '{name}'"))),
        };
        match name.as_str() {
            META_EPS => eps = values.first().copied().unwrap_or(eps),
            META_MOMENTUM => momentum = values.first().copied().unwrap_or(momentum),
            _ => {
                let target = match net.params_mut().get_mut(&name) {
                    Some(t) => t,
                    None => net
                        .buffers_mut()
                        .get_mut(&name)
                        .ok_or_else(|| Error::Format(format!("unknown tensor name '{name}'")))?,
                };
                if target.dims() != dims.as_slice() {
                    return Err(Error::Format(format!(
                        "tensor '{name}' has dims {dims:?}, model expects {:?}",
                        target.dims()
                    )));
                }
                target.data_mut().copy_from_slice(&values);
                seen += 1;
            }
        }
    }
    if seen != expected {
        return Err(Error::Format(format!("checkpoint holds {seen} of {expected} model tensors")));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    net.set_bn_hyper(eps, momentum);
    net.set_mode(Mode::Eval);
    Ok(net)
}
