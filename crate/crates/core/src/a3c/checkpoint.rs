//! Parameter files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "VMAP" | version | tensor count
//! per tensor: ndim | dims... | f32 LE data (product of dims values)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NetworkArch, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VMAP";
const VERSION: u32 = 1;
const MAX_NDIM: u32 = 8;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_tensors<W: Write>(mut out: W, tensors: &[Tensor<f32>]) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(4 * t.len());
        for &x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&bytes)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|_| corrupt(format!("truncated file while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut input: R) -> Result<Vec<Tensor<f32>>> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| corrupt("file too short for a checkpoint header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut input, "version")?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut input, "tensor count")?;
    let mut tensors = Vec::new();
    for k in 0..count {
        let ndim = read_u32(&mut input, "rank")?;
        if ndim > MAX_NDIM {
            return Err(corrupt(format!("tensor {k} claims rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        for _ in 0..ndim {
            shape.push(read_u32(&mut input, "shape")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| corrupt(format!("tensor {k} has an implausible shape {shape:?}")))?;
        let mut bytes = vec![0u8; 4 * n];
        input
            .read_exact(&mut bytes)
            .map_err(|_| corrupt(format!("truncated data in tensor {k}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after the last tensor"));
    }
    Ok(tensors)
}

pub fn save_params(path: &Path, params: &NetworkParams<f32>) -> Result<()> {
    write_tensors(BufWriter::new(File::create(path)?), &params.tensors)
}

/// Loads parameters and checks them against `arch`.
pub fn load_params(path: &Path, arch: &NetworkArch) -> Result<NetworkParams<f32>> {
    let tensors = read_tensors(BufReader::new(File::open(path)?))?;
    NetworkParams::from_tensors(arch, tensors).map_err(|e| match e {
        Error::Contract(msg) => corrupt(msg),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let arch = NetworkArch::reduced(2);
        let params = NetworkParams::<f32>::init(&arch, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_params(&path, &params).unwrap();
        assert_eq!(load_params(&path, &arch).unwrap(), params);
        assert_eq!(&std::fs::read(&path).unwrap()[..4], b"VMAP");
    }

    #[test]
    fn corruption_is_detected() {
        let arch = NetworkArch::reduced(2);
        let params = NetworkParams::<f32>::init(&arch, 8).unwrap();
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &params.tensors).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensors(&bad[..]), Err(Error::Checkpoint(_))));
        assert!(matches!(read_tensors(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_tensors(&long[..]), Err(Error::Checkpoint(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_params(&path, &NetworkArch::reduced(3)),
            Err(Error::Checkpoint(_))
        ));
    }
}
