//! Binary correlation-map files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                 |
//! |--------|------|-----------------------|
//! | 0      | 4    | magic `ARTC`          |
//! | 4      | 2    | version (1)           |
//! | 6      | 2    | rows                  |
//! | 8      | 2    | cols                  |
//! | 10     | 2    | patch size (pixels)   |
//! | 12     | 2    | reserved              |
//! | 14     | 4·n  | `f32` ρ, row-major    |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::allocator::CorrelationMap;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ARTC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 14;

pub fn encode(map: &CorrelationMap) -> Result<Vec<u8>> {
    let rows = u16::try_from(map.rows())
        .map_err(|_| Error::MapFormat(format!("{} rows do not fit u16", map.rows())))?;
    let cols = u16::try_from(map.cols())
        .map_err(|_| Error::MapFormat(format!("{} cols do not fit u16", map.cols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.values().len());
    out.extend_from_slice(MAGIC);
    for field in [VERSION, rows, cols, map.patch_size(), 0] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<CorrelationMap> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MapFormat(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::MapFormat("bad magic".into()));
    }
    let u16_at = |off: usize| u16::from_le_bytes([bytes[off], bytes[off + 1]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::MapFormat(format!("unsupported version {version}")));
    }
    let (rows, cols, patch) = (usize::from(u16_at(6)), usize::from(u16_at(8)), u16_at(10));
    let body = &bytes[HEADER_LEN..];
    let expected = rows * cols * 4;
    if body.len() != expected {
        return Err(Error::MapFormat(format!(
            "{rows}x{cols} map needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(-1.0..=1.0).contains(*v))
    {
        return Err(Error::MapFormat(format!(
            "patch {i} (row {}, col {}) has correlation {v} outside [-1, 1]",
            i / cols.max(1),
            i % cols.max(1)
        )));
    }
    CorrelationMap::new(rows, cols, patch, values)
}

pub fn read_from<R: Read>(mut reader: R) -> Result<CorrelationMap> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn write_to<W: Write>(map: &CorrelationMap, mut writer: W) -> Result<()> {
    writer.write_all(&encode(map)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<CorrelationMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode(&bytes)
}

pub fn save(map: &CorrelationMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(map)?)?;
    Ok(())
}
