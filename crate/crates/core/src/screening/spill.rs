//! On-disk chunks of the Bayes-factor cache.
//!
//! Layout: a 32-byte header (`b"MBSC"`, `u32` version, `u64` first row,
//! `u64` row count, `u64` draws per row) followed by `2 * rows * draws`
//! little-endian `f64` values, row-major, `(log_bf11, log_bf12)` per draw.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MBSC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SpillChunk {
    pub start: u64,
    pub len: u64,
    pub draws: u64,
    pub values: Vec<f64>,
}

pub fn write_chunk(path: &Path, start: u64, len: u64, draws: u64, values: &[f64]) -> Result<()> {
    if values.len() as u64 != 2 * len * draws {
        return Err(Error::Internal(format!(
            "spill chunk holds {} values, expected {}",
            values.len(),
            2 * len * draws
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&start.to_le_bytes());
    header[16..24].copy_from_slice(&len.to_le_bytes());
    header[24..32].copy_from_slice(&draws.to_le_bytes());
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(&header)?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_chunk(path: &Path) -> Result<SpillChunk> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format {
            line: 0,
            msg: format!("{}: not a spill chunk", path.display()),
        });
    }
    let word = |at: usize| u64::from_le_bytes(header[at..at + 8].try_into().unwrap());
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format {
            line: 0,
            msg: format!("{}: unsupported spill version {version}", path.display()),
        });
    }
    let (start, len, draws) = (word(8), word(16), word(24));
    let count = len
        .checked_mul(draws)
        .and_then(|v| v.checked_mul(2))
        .ok_or_else(|| Error::Format {
            line: 0,
            msg: "spill chunk size overflows".into(),
        })? as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != count * 8 {
        return Err(Error::Format {
            line: 0,
            msg: format!("{}: expected {} payload bytes, found {}", path.display(), count * 8, bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(SpillChunk {
        start,
        len,
        draws,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mbsc");
        let values = vec![1.5, -0.0, f64::MIN_POSITIVE, -1e300, 3.25, 7.0];
        write_chunk(&path, 10, 1, 3, &values).unwrap();
        let back = read_chunk(&path).unwrap();
        assert_eq!((back.start, back.len, back.draws), (10, 1, 3));
        let bits: Vec<u64> = back.values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(std::fs::metadata(&path).unwrap().len(), (HEADER_LEN + 48) as u64);
    }

    #[test]
    fn truncated_or_foreign_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mbsc");
        write_chunk(&path, 0, 2, 1, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_chunk(&path), Err(Error::Format { .. })));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_chunk(&path), Err(Error::Format { .. })));
        assert!(write_chunk(&path, 0, 2, 1, &[1.0]).is_err());
    }
}
