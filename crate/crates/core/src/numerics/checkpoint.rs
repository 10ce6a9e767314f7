//! Binary checkpoint format.
//!
//! ```text
//! "UKPC" | version: u32 | count: u32 |
//!   repeated: name_len: u16 | name (UTF-8) | rank: u8 | dims: u32 × rank | payload: f32 × numel
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{NumericsError, ParameterStore, Tensor};

pub const MAGIC: &[u8; 4] = b"UKPC";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(&str, &Tensor<f32>)]) -> Result<(), NumericsError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(tensors.len()).map_err(|_| corrupt("too many tensors"))?.to_le_bytes())?;
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len()).map_err(|_| corrupt("parameter name too long"))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let rank = u8::try_from(t.shape().len()).map_err(|_| corrupt("rank too large"))?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&u32::try_from(d).map_err(|_| corrupt("dimension too large"))?.to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)?;
    }
    Ok(())
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f32>)>, NumericsError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NumericsError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(NumericsError::UnsupportedVersion(version));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| corrupt("name is not UTF-8"))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let shape = (0..rank[0])
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 4];
        r.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(out)
}

pub fn save(store: &ParameterStore<f32>, path: &Path) -> Result<(), NumericsError> {
    let tensors: Vec<_> = store.iter().map(|(_, p)| (p.name(), p.value())).collect();
    let mut buf = Vec::new();
    write_tensors(&mut buf, &tensors)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Loads values into an existing store whose names and shapes must match
/// the file exactly.
pub fn load_into(store: &mut ParameterStore<f32>, path: &Path) -> Result<(), NumericsError> {
    let bytes = std::fs::read(path)?;
    let tensors = read_tensors(bytes.as_slice())?;
    if tensors.len() != store.len() {
        return Err(corrupt(&format!(
            "checkpoint has {} tensors, model expects {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, t) in tensors {
        let id = store.id(&name)?;
        store.set_value(id, t)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NumericsError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn corrupt(msg: &str) -> NumericsError {
    NumericsError::Corrupt(msg.to_string())
}
