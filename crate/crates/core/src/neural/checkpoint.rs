//! Binary checkpoint format, all integers and reals little-endian:
//!
//! ```text
//! magic    8 bytes  "STKLSTM\0"
//! version  u32
//! config   price_features u64, tweet_features u64, hidden u64, dense u64, dropout_p f64
//! count    u32
//! tensor*  name_len u32, name utf-8, rows u64, cols u64, rows*cols f64 row-major
//! ```

use super::network::{NetworkConfig, NetworkParams};
use super::NeuralError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STKLSTM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.parameter_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let c = params.config;
    for v in [c.price_features, c.tweet_features, c.hidden, c.dense] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.dropout_p.to_le_bytes());
    out.extend_from_slice(&(NetworkParams::TENSOR_NAMES.len() as u32).to_le_bytes());
    let shapes = params.tensor_shapes();
    for ((name, data), (rows, cols)) in NetworkParams::TENSOR_NAMES
        .iter()
        .zip(params.tensors())
        .zip(shapes)
    {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| NeuralError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, NeuralError> {
        usize::try_from(self.u64()?).map_err(|_| NeuralError::Checkpoint("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64, NeuralError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<NetworkParams, NeuralError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let config = NetworkConfig {
        price_features: r.usize()?,
        tweet_features: r.usize()?,
        hidden: r.usize()?,
        dense: r.usize()?,
        dropout_p: r.f64()?,
    };
    config.validate()?;
    let mut params = NetworkParams::zeros(config);
    let count = r.u32()? as usize;
    if count != NetworkParams::TENSOR_NAMES.len() {
        return Err(NeuralError::Checkpoint(format!("expected 12 tensors, found {count}")));
    }
    let shapes = params.tensor_shapes();
    for ((name, shape), dst) in NetworkParams::TENSOR_NAMES
        .iter()
        .zip(shapes)
        .zip(params.tensors_mut())
    {
        let len = r.u32()? as usize;
        let found = r.take(len)?;
        if found != name.as_bytes() {
            return Err(NeuralError::Checkpoint(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let dims = (r.usize()?, r.usize()?);
        if dims != shape {
            return Err(NeuralError::Checkpoint(format!(
                "tensor {name} has shape {dims:?}, config implies {shape:?}"
            )));
        }
        for v in dst.iter_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(NeuralError::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NetworkParams {
        let config = NetworkConfig {
            price_features: 3,
            tweet_features: 2,
            hidden: 4,
            dense: 5,
            dropout_p: 0.2,
        };
        NetworkParams::init(config, 17).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = params();
        let bytes = write_checkpoint(&p);
        let q = read_checkpoint(&bytes).unwrap();
        assert_eq!(p.tensors(), q.tensors());
        assert_eq!(p.config, q.config);
        assert_eq!(write_checkpoint(&q), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = write_checkpoint(&params());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_checkpoint(&long).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(read_checkpoint(&version).is_err());
    }
}
