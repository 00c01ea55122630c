//! Binary checkpoint format. All integers are little-endian.
//!
//! ```text
//! magic      8 bytes   "ENDOVOCK"
//! version    u32       1
//! config     u32 len + UTF-8 key=value text (NetConfig::to_text)
//! count      u32       number of tensor records
//! record*    u32 name len + UTF-8 name
//!            u32 ndim, then ndim x u64 dims
//!            prod(dims) values, f32 or f64 per the config's precision
//! ```
//!
//! Records appear in the canonical parameter order; readers reject unknown,
//! missing or misshapen tensors.

use std::path::Path;

use super::{NetConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::{Precision, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"ENDOVOCK";
pub const VERSION: u32 = 1;

/// Parameters in whichever precision the file was written with.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSet {
    F32(NetworkParams<f32>),
    F64(NetworkParams<f64>),
}

impl ParamSet {
    pub fn precision(&self) -> Precision {
        match self {
            ParamSet::F32(_) => Precision::F32,
            ParamSet::F64(_) => Precision::F64,
        }
    }

    /// Converts to `T`; exact when the precisions agree.
    pub fn to_precision<T: Real>(&self) -> NetworkParams<T> {
        match self {
            ParamSet::F32(p) => p.cast(),
            ParamSet::F64(p) => p.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub params: ParamSet,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Validation(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode<T: Real>(config: &NetConfig, params: &NetworkParams<T>) -> Result<Vec<u8>> {
    if config.precision != T::PRECISION {
        return Err(Error::Config(format!(
            "config says {} but parameters are {}",
            config.precision.as_str(),
            T::PRECISION.as_str()
        )));
    }
    params.check_layout(config)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = config.to_text();
    put_u32(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    let named = params.named();
    put_u32(&mut out, named.len())?;
    for (name, t) in named {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.ndim())?;
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Validation(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Validation(format!("dimension {v} too large")))
    }

    fn string(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::Validation("checkpoint string is not UTF-8".into()))
    }
}

fn decode_params<T: Real>(r: &mut Reader<'_>, config: &NetConfig) -> Result<NetworkParams<T>> {
    let mut params = NetworkParams::<T>::zeros(config)?;
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let count = r.u32()?;
    if count != names.len() {
        return Err(Error::Validation(format!(
            "checkpoint has {count} tensors, config implies {}",
            names.len()
        )));
    }
    let size = T::PRECISION.bytes();
    for (expected, slot) in names.iter().zip(params.tensors_mut()) {
        let name = r.string()?;
        if name != expected {
            return Err(Error::Validation(format!(
                "expected tensor `{expected}`, found `{name}`"
            )));
        }
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if shape != slot.shape() {
            return Err(Error::Validation(format!(
                "tensor `{name}` has shape {shape:?}, expected {:?}",
                slot.shape()
            )));
        }
        let raw = r.take(slot.len() * size)?;
        let data = raw.chunks_exact(size).map(T::read_le).collect();
        *slot = Tensor::new(&shape, data)?;
    }
    Ok(params)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Validation("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version as u32 != VERSION {
        return Err(Error::Validation(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config = NetConfig::from_text(r.string()?)?;
    let params = match config.precision {
        Precision::F32 => ParamSet::F32(decode_params(&mut r, &config)?),
        Precision::F64 => ParamSet::F64(decode_params(&mut r, &config)?),
    };
    if r.pos != bytes.len() {
        return Err(Error::Validation(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { config, params })
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        match &self.params {
            ParamSet::F32(p) => encode(&self.config, p),
            ParamSet::F64(p) => encode(&self.config, p),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode(&bytes).map_err(|e| match e {
            Error::Validation(msg) => Error::format(path, msg),
            other => other,
        })
    }
}

pub fn save<T: Real>(path: &Path, config: &NetConfig, params: &NetworkParams<T>) -> Result<()> {
    let bytes = encode(config, params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(precision: Precision) -> NetConfig {
        NetConfig {
            input_height: 8,
            input_width: 8,
            inception_widths: vec![[1, 2, 1, 1], [1, 1, 1, 1], [2, 1, 1, 1]],
            lstm_hidden: 4,
            precision,
            ..NetConfig::default()
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for precision in [Precision::F32, Precision::F64] {
            let c = cfg(precision);
            let bytes = match precision {
                Precision::F32 => encode(&c, &NetworkParams::<f32>::init(&c, 3).unwrap()),
                Precision::F64 => encode(&c, &NetworkParams::<f64>::init(&c, 3).unwrap()),
            }
            .unwrap();
            let ck = decode(&bytes).unwrap();
            assert_eq!(ck.config, c);
            assert_eq!(ck.params.precision(), precision);
            assert_eq!(ck.encode().unwrap(), bytes);
        }
    }

    #[test]
    fn rejects_corruption() {
        let c = cfg(Precision::F64);
        let bytes = encode(&c, &NetworkParams::<f64>::init(&c, 3).unwrap()).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn precision_must_match_parameters() {
        let c = cfg(Precision::F32);
        let p = NetworkParams::<f64>::init(&c, 3).unwrap();
        assert!(matches!(encode(&c, &p), Err(Error::Config(_))));
    }
}
