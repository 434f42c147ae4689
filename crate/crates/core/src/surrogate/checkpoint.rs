//! Little-endian binary checkpoints.
//!
//! ```text
//! b"BNMF"                      magic
//! u32                          version (1)
//! u32                          layer count L
//! L × (u32 rows, u32 cols)     shape of each M
//! L × (rows·cols f64, rows f64)  M row-major, then b, layer by layer
//! ```
//!
//! The gain `κ` and the output head are not part of the file and are
//! supplied when loading.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Head, SurrogateNetwork};
use crate::error::{Error, Result};
use crate::layer::MeanLayer;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"BNMF";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(net: &SurrogateNetwork<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * net.layers.len() + 8 * net.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        out.extend_from_slice(&(layer.fan_out() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.fan_in() as u32).to_le_bytes());
    }
    for layer in &net.layers {
        for &v in layer.means.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let chunk = self
            .bytes
            .get(self.at..self.at + N)
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        self.at += N;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], kappa: T, head: Head) -> Result<SurrogateNetwork<T>> {
    let mut r = Reader { bytes, at: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(Error::Checkpoint("no layers".into()));
    }
    let shapes = (0..n)
        .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
        .collect::<Result<Vec<_>>>()?;
    if shapes.windows(2).any(|w| w[0].0 != w[1].1) {
        return Err(Error::Checkpoint(format!("inconsistent layer shapes {shapes:?}")));
    }
    let mut layers = Vec::with_capacity(n);
    for &(rows, cols) in &shapes {
        let means = (0..rows * cols)
            .map(|_| r.f64().map(T::lit))
            .collect::<Result<Vec<_>>>()?;
        let bias = (0..rows).map(|_| r.f64().map(T::lit)).collect::<Result<Vec<_>>>()?;
        let means = Array2::from_shape_vec((rows, cols), means).expect("sized above");
        layers.push(MeanLayer::new(means, Array1::from(bias))?);
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok(SurrogateNetwork { layers, kappa, head })
}

pub fn save_checkpoint<T: Scalar>(net: &SurrogateNetwork<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint<T: Scalar>(path: &Path, kappa: T, head: Head) -> Result<SurrogateNetwork<T>> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes, kappa, head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::MeanInit;
    use crate::surrogate::init_network;

    #[test]
    fn round_trip_and_layout() {
        let net = init_network::<f64>(&[3, 2, 2], 0.4, 0.1, MeanInit::ClippedGaussian, 1.0, Head::Softmax, 8).unwrap();
        let bytes = encode_checkpoint(&net);
        assert_eq!(&bytes[..4], b"BNMF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        let first = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        assert_eq!(first, net.layers[0].means[[0, 0]]);
        assert_eq!(bytes.len(), 28 + 8 * (6 + 2 + 4 + 2));
        assert_eq!(decode_checkpoint(&bytes, 1.0, Head::Softmax).unwrap(), net);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = init_network::<f64>(&[2, 2], 0.4, 0.1, MeanInit::SymmetricBernoulli, 1.0, Head::Softmax, 8).unwrap();
        let bytes = encode_checkpoint(&net);
        assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 1], 1.0, Head::Softmax).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f64>(&bad, 1.0, Head::Softmax).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_checkpoint::<f64>(&long, 1.0, Head::Softmax).is_err());
    }
}
