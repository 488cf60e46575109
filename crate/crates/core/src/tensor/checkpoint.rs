//! Flat little-endian parameter files.
//!
//! Layout: `b"CSQP"`, version `u32`, precision byte (4 or 8), then for each
//! parameter until end of file: name length `u32`, UTF-8 name, rank `u32`,
//! `rank` dims as `u64`, row-major values.

use std::path::Path;

use super::{Precision, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSQP";
pub const VERSION: u32 = 1;

/// One serialized parameter, widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn encode_params<T: Real>(store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.num_scalars() * T::PRECISION.byte_width() as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::PRECISION.byte_width());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.value.data() {
            x.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
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
}

pub fn decode_params(bytes: &[u8]) -> Result<(Precision, Vec<StoredParam>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let width = r.take(1)?[0];
    let precision = Precision::from_byte_width(width)
        .ok_or_else(|| Error::Checkpoint(format!("bad precision byte {width}")))?;
    let mut params = Vec::new();
    while r.pos < bytes.len() {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = r.take(count * width as usize)?;
        let values = match precision {
            Precision::Single => raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
            Precision::Double => raw.chunks_exact(8).map(f64::read_le).collect(),
        };
        params.push(StoredParam { name, shape, values });
    }
    Ok((precision, params))
}

/// Overwrite every parameter of `store` from `bytes`, matched by name.
pub fn load_into<T: Real>(store: &mut ParamStore<T>, bytes: &[u8]) -> Result<Precision> {
    let (precision, stored) = decode_params(bytes)?;
    if stored.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            stored.len(),
            store.len()
        )));
    }
    for sp in stored {
        let id = store
            .id(&sp.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", sp.name)))?;
        if store.value(id).shape() != sp.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?} vs model {:?}",
                sp.name,
                sp.shape,
                store.value(id).shape()
            )));
        }
        store.get_mut(id).value = Tensor::from_f64(sp.shape, &sp.values)?;
    }
    Ok(precision)
}

pub fn save<T: Real>(store: &ParamStore<T>, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &encode_params(store))
}

pub fn load<T: Real>(store: &mut ParamStore<T>, path: &Path) -> Result<Precision> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_into(store, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store<T: Real>() -> ParamStore<T> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_f64(vec![2, 3], &[0.1, -0.2, 0.3, 1.5, 2.25, -7.0]).unwrap());
        s.add("b", Tensor::from_f64(vec![3], &[0.0, 1.0, -1.0]).unwrap());
        s
    }

    #[test]
    fn round_trip_same_precision() {
        let s = store::<f64>();
        let mut t = ParamStore::<f64>::new();
        t.add("w", Tensor::zeros(vec![2, 3]));
        t.add("b", Tensor::zeros(vec![3]));
        assert_eq!(load_into(&mut t, &encode_params(&s)).unwrap(), Precision::Double);
        assert_eq!(s.values(), t.values());
    }

    #[test]
    fn loads_across_precision() {
        let s = store::<f32>();
        let mut t = ParamStore::<f64>::new();
        t.add("b", Tensor::zeros(vec![3]));
        t.add("w", Tensor::zeros(vec![2, 3]));
        assert_eq!(load_into(&mut t, &encode_params(&s)).unwrap(), Precision::Single);
        assert_eq!(t.value(t.id("w").unwrap()).data()[4], 2.25);
    }

    #[test]
    fn rejects_bad_input() {
        let s = store::<f32>();
        let bytes = encode_params(&s);
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_params(b"XXXX").is_err());
        let mut t = ParamStore::<f32>::new();
        t.add("w", Tensor::zeros(vec![3, 2]));
        t.add("b", Tensor::zeros(vec![3]));
        assert!(load_into(&mut t, &bytes).is_err());
    }
}
