//! Versioned binary snapshots.
//!
//! Layout: 8-byte magic, u32 version, u8 kind tag, then a kind-specific
//! header and row-major little-endian f64 payloads. Model snapshots carry
//! |P|, d and the position-table length; other kinds (attack MLPs, soft
//! decision sets) reuse the same framing with their own tags.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::Error;
use crate::Result;

use super::ModelParams;

pub(crate) const MAGIC: [u8; 8] = *b"POISNAP\0";
pub(crate) const FORMAT_VERSION: u32 = 1;

pub(crate) const KIND_MODEL: u8 = 1;
pub(crate) const KIND_ATTACK_MLP: u8 = 2;
pub(crate) const KIND_SOFT_DECISIONS: u8 = 3;

pub(crate) fn write_header(w: &mut impl Write, kind: u8) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[kind])?;
    Ok(())
}

pub(crate) fn read_header(r: &mut impl Read, expected_kind: u8) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format("bad snapshot magic".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    if kind[0] != expected_kind {
        return Err(Error::Format(format!(
            "snapshot kind {} where {expected_kind} was expected",
            kind[0]
        )));
    }
    Ok(())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn write_f64s<'a>(w: &mut impl Write, vs: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let data = read_f64s(r, rows * cols)?;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("bad matrix shape: {e}")))
}

/// Serialize a model snapshot.
pub fn write_model(w: &mut impl Write, params: &ModelParams) -> Result<()> {
    write_header(w, KIND_MODEL)?;
    write_u64(w, params.poi_count() as u64)?;
    write_u64(w, params.dim() as u64)?;
    write_u64(w, params.max_seq_len() as u64)?;
    write_f64s(w, params.embeddings.iter())?;
    write_f64s(w, params.query_weights.iter())?;
    write_f64s(w, params.key_weights.iter())?;
    write_f64s(w, params.position_weights.iter())?;
    Ok(())
}

/// Deserialize a model snapshot.
pub fn read_model(r: &mut impl Read) -> Result<ModelParams> {
    read_header(r, KIND_MODEL)?;
    let poi_count = read_u64(r)? as usize;
    let dim = read_u64(r)? as usize;
    let max_len = read_u64(r)? as usize;
    Ok(ModelParams {
        embeddings: read_matrix(r, poi_count, dim)?,
        query_weights: read_matrix(r, dim, dim)?,
        key_weights: read_matrix(r, dim, dim)?,
        position_weights: read_matrix(r, max_len, dim)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recsys::model::init_model;
    use crate::recsys::InitSpec;

    #[test]
    fn model_snapshot_round_trips_bit_exactly() {
        let params = init_model(17, 8, &InitSpec::new(4)).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &params).unwrap();
        let back = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let params = init_model(5, 8, &InitSpec::new(4)).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &params).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            read_model(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncated_snapshot_is_an_io_error() {
        let params = init_model(5, 8, &InitSpec::new(4)).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &params).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(read_model(&mut buf.as_slice()).is_err());
    }
}
