//! Binary grid checkpoints.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `b"FFGRID01"`                     |
//! | 8      | 12   | resolution `nx, ny, nz` as `u32`        |
//! | 20     | 48   | bounds `min.xyz, max.xyz` as `f64`      |
//! | 68     | ...  | five planar channel arrays of `f64`     |
//!
//! Channel arrays follow in the order density, red, green, blue, semantic.
//! Each holds `nx·ny·nz` raw values in x-fastest order (index
//! `i + nx·(j + ny·k)`). Gradients and optimizer state are not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FieldGrid, Voxel, CHANNELS};
use crate::geom::{Aabb, Vec3};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FFGRID01";
const HEADER_LEN: usize = 8 + 12 + 48;

pub fn write_checkpoint(grid: &FieldGrid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(CHECKPOINT_MAGIC);
    for n in grid.resolution() {
        header.extend_from_slice(&(n as u32).to_le_bytes());
    }
    let b = grid.bounds();
    for v in b.min.0.iter().chain(b.max.0.iter()) {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    for c in 0..CHANNELS {
        let mut buf = Vec::with_capacity(grid.len() * 8);
        for v in grid.raw() {
            buf.extend_from_slice(&v[c].to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<FieldGrid> {
    let bad = |message: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if &header[..8] != CHECKPOINT_MAGIC {
        return Err(bad("wrong magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let resolution = [u32_at(8), u32_at(12), u32_at(16)];
    let bounds = Aabb::new(
        Vec3::new(f64_at(20), f64_at(28), f64_at(36)),
        Vec3::new(f64_at(44), f64_at(52), f64_at(60)),
    );
    if resolution.iter().any(|&n| n < 2) || !bounds.is_valid() {
        return Err(bad("invalid resolution or bounds"));
    }
    let n: usize = resolution.iter().product();
    let mut raw: Vec<Voxel> = vec![[0.0; CHANNELS]; n];
    let mut buf = vec![0u8; n * 8];
    for c in 0..CHANNELS {
        r.read_exact(&mut buf).map_err(|_| bad("truncated channel data"))?;
        for (v, chunk) in raw.iter_mut().zip(buf.chunks_exact(8)) {
            v[c] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes"));
    }
    FieldGrid::from_raw(resolution, bounds, raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        let mut g = FieldGrid::init([3, 4, 5], Aabb::unit(), -4.0, -2.0).unwrap();
        for (i, v) in g.raw_mut().iter_mut().enumerate() {
            v[2] = i as f64 * 0.25;
        }
        write_checkpoint(&g, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 60 * 5 * 8);
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.raw(), g.raw());
        assert_eq!(back.resolution(), [3, 4, 5]);

        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        std::fs::write(&path, &corrupt).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint { .. })));
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint { .. })));
    }
}
