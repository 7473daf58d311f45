//! Field dumps: a small little-endian binary container and a CSV export.
//!
//! Binary layout:
//! ```text
//! magic     8 bytes  "TOCPFLD\0"
//! version   u32
//! dim       u32
//! counts    2 x u32  (second is 1 in 1D)
//! slices    u64
//! dt        f64      (0 for purely spatial fields)
//! payload   slices * nodes f64, slice-major, row-major within a slice
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SpaceTimeField};

const MAGIC: &[u8; 8] = b"TOCPFLD\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub dim: usize,
    pub counts: [usize; 2],
    pub dt: f64,
    pub data: SpaceTimeField,
}

impl FieldDump {
    pub fn new(grid: &GridSpec, dt: f64, data: SpaceTimeField) -> Result<Self> {
        if data.nodes() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} nodes, grid {}",
                data.nodes(),
                grid.len()
            )));
        }
        let c = grid.counts();
        Ok(Self {
            dim: grid.dim(),
            counts: [c[0], if grid.dim() == 2 { c[1] } else { 1 }],
            dt,
            data,
        })
    }

    /// A single spatial slice.
    pub fn spatial(grid: &GridSpec, values: &[f64]) -> Result<Self> {
        Self::new(grid, 0.0, SpaceTimeField::from_vec(values.len(), values.to_vec())?)
    }
}

pub fn encode_field(dump: &FieldDump) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 8 * dump.data.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dump.dim as u32).to_le_bytes());
    out.extend_from_slice(&(dump.counts[0] as u32).to_le_bytes());
    out.extend_from_slice(&(dump.counts[1] as u32).to_le_bytes());
    out.extend_from_slice(&(dump.data.slices() as u64).to_le_bytes());
    out.extend_from_slice(&dump.dt.to_le_bytes());
    for v in dump.data.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<FieldDump> {
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::Format("field dump is truncated".into()));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(Error::Format("not a field dump (bad magic)".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported field dump version {version}")));
    }
    let dim = u32_at(take(4)?) as usize;
    let c0 = u32_at(take(4)?) as usize;
    let c1 = u32_at(take(4)?) as usize;
    let slices = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let dt = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
    if !(dim == 1 || dim == 2) || (dim == 1 && c1 != 1) {
        return Err(Error::Format(format!("bad header: dim {dim}, counts [{c0}, {c1}]")));
    }
    let nodes = c0 * c1;
    let payload = take(8 * nodes * slices)?;
    if !cur.is_empty() {
        return Err(Error::Format("trailing bytes after field payload".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    Ok(FieldDump {
        dim,
        counts: [c0, c1],
        dt,
        data: SpaceTimeField::from_vec(nodes, data)?,
    })
}

pub fn write_field(path: &Path, dump: &FieldDump) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_field(dump))?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldDump> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

/// CSV with columns `slice,time,node,value`.
pub fn write_field_csv(path: &Path, dump: &FieldDump) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "slice,time,node,value")?;
    for n in 0..dump.data.slices() {
        let t = n as f64 * dump.dt;
        for (k, v) in dump.data.slice(n).iter().enumerate() {
            writeln!(w, "{n},{t:e},{k},{v:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let grid = GridSpec::new(2, &[1.0, 2.0], &[3, 5]).unwrap();
        let data = SpaceTimeField::from_fn(15, 4, |n, k| ((n * 31 + k) as f64).sin() * 1e-7 + 1.0 / 3.0);
        let dump = FieldDump::new(&grid, 0.125, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_field(&path, &dump).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.counts, [3, 5]);
        let bits = |f: &FieldDump| f.data.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&dump));
        assert_eq!(back.dt.to_bits(), dump.dt.to_bits());
    }

    #[test]
    fn corrupt_dumps_are_rejected() {
        let grid = GridSpec::new(1, &[1.0], &[4]).unwrap();
        let dump = FieldDump::spatial(&grid, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_field(&dump);
        assert!(decode_field(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_field(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_field(&long).is_err());
    }

    #[test]
    fn csv_has_one_row_per_value() {
        let grid = GridSpec::new(1, &[1.0], &[3]).unwrap();
        let dump = FieldDump::new(&grid, 0.5, SpaceTimeField::constant(3, 2, 1.5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_field_csv(&path, &dump).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(4).unwrap().starts_with("1,5e-1,0,"));
    }
}
